/**
 * View models for elicitation sessions.
 *
 * Everything here is a pure function of the server payloads: the UI
 * holds no state beyond the session id, so a refresh rebuilds an
 * identical view from GET /sessions/{id}.
 */
export const TERMINAL_STATES = ["done", "failed"];
export function caption(cell) {
    return `${cell.texture} ${cell.kind}`;
}
function cssColor(color) {
    return `rgb(${color[0]}, ${color[1]}, ${color[2]})`;
}
/**
 * Grid view with cells highlighted when their caption does not occur in
 * the other scene: the same intersection/difference decomposition the
 * preference query shows the model.
 */
export function deriveGrid(scene, other) {
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
export function deriveScenePair(pending) {
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
export function entropyGaugeFraction(entropy, hypothesisCount) {
    if (hypothesisCount <= 1) {
        return 0;
    }
    const fraction = entropy / Math.log(hypothesisCount);
    return Math.min(1, Math.max(0, fraction));
}
export function hypothesesSumToOne(hypotheses, tol = 1e-9) {
    const total = hypotheses.reduce((acc, [, p]) => acc + p, 0);
    return Math.abs(total - 1) <= tol;
}
/** Client-side guard: empty submissions never reach the network. */
export function validatePreferenceText(text) {
    if (!text.trim()) {
        return { ok: false, message: "Please describe the preference before submitting." };
    }
    return { ok: true };
}
