"""Preference-conditioned language-guided abstraction (PLGA) pipeline.

A desk-scale tabletop world, an invertible state captioner, LM-backed
feature abstraction and preference inference (with scripted offline
backends), masked behavioral-cloning policies, and the experiment
harness comparing GCBC, LGA, and passive/active PLGA.
"""

__version__ = "0.1.0"
