/**
 * View models for elicitation sessions.
 *
 * Everything here is a pure function of the server payloads: the UI
 * holds no state beyond the session id, so a refresh rebuilds an
 * identical view from GET /sessions/{id}.
 */

export interface SceneCell {
  row: number;
  col: number;
  uid: number;
  kind: string;
  texture: string;
  color: [number, number, number];
}

export interface SceneView {
  scene_id: string;
  grid_dims: [number, number];
  held_object: number | null;
  cells: SceneCell[];
}

export interface PendingQuery {
  hypotheses: [string, number][];
  entropy: number;
  scene_a?: SceneView;
  scene_b?: SceneView;
  distance?: number;
}

export interface ResolutionView {
  theta_hat: string;
  mode: string;
  human_answer_raw: string | null;
}

export interface MethodBar {
  method: string;
  success_mean: number;
  success_stderr: number;
}

export interface ReportView {
  spec_id: string;
  results: MethodBar[];
  theta_hat: string | null;
  final_loss: number;
  mask_preview?: { scene: SceneView; mask: number[][] };
}

export interface SessionView {
  id: string;
  spec_id: string;
  method: string;
  seed: number;
  state: string;
  pending: PendingQuery | null;
  resolution: ResolutionView | null;
  report: ReportView | null;
  error: string | null;
}

export interface CellVM extends SceneCell {
  caption: string;
  highlighted: boolean;
  cssColor: string;
}

export interface GridVM {
  sceneId: string;
  width: number;
  height: number;
  cells: CellVM[];
}

export const TERMINAL_STATES = ["done", "failed"];

export function caption(cell: SceneCell): string {
  return `${cell.texture} ${cell.kind}`;
}

function cssColor(color: [number, number, number]): string {
  return `rgb(${color[0]}, ${color[1]}, ${color[2]})`;
}

/**
 * Grid view with cells highlighted when their caption does not occur in
 * the other scene: the same intersection/difference decomposition the
 * preference query shows the model.
 */
export function deriveGrid(scene: SceneView, other: SceneView | undefined): GridVM {
  const otherCaptions = new Set((other?.cells ?? []).map(caption));
  return {
    sceneId: scene.scene_id,
    width: scene.grid_dims[0],
    height: scene.grid_dims[1],
    cells: scene.cells.map((cell) => ({
      ...cell,
      caption: caption(cell),
      highlighted: !otherCaptions.has(caption(cell)),
      cssColor: cssColor(cell.color),
    })),
  };
}

export function deriveScenePair(
  pending: PendingQuery
): { gridA: GridVM | null; gridB: GridVM | null } {
  const a = pending.scene_a;
  const b = pending.scene_b;
  return {
    gridA: a ? deriveGrid(a, b) : null,
    gridB: b ? deriveGrid(b, a) : null,
  };
}

/**
 * Uncertainty as a fraction of the maximum possible entropy for the
 * hypothesis count, so the gauge reads the same across k.
 */
export function entropyGaugeFraction(entropy: number, hypothesisCount: number): number {
  if (hypothesisCount <= 1) {
    return 0;
  }
  const fraction = entropy / Math.log(hypothesisCount);
  return Math.min(1, Math.max(0, fraction));
}

export function hypothesesSumToOne(hypotheses: [string, number][], tol = 1e-9): boolean {
  const total = hypotheses.reduce((acc, [, p]) => acc + p, 0);
  return Math.abs(total - 1) <= tol;
}

export interface SubmitValidation {
  ok: boolean;
  message?: string;
}

/** Client-side guard: empty submissions never reach the network. */
export function validatePreferenceText(text: string): SubmitValidation {
  if (!text.trim()) {
    return { ok: false, message: "Please describe the preference before submitting." };
  }
  return { ok: true };
}
