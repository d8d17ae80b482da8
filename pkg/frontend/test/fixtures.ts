import { PendingQuery, ReportView, SceneView, SessionView } from "../src/model.js";

export function scene(
  sceneId: string,
  cells: Array<[number, number, string, string]>
): SceneView {
  return {
    scene_id: sceneId,
    grid_dims: [12, 12],
    held_object: null,
    cells: cells.map(([row, col, kind, texture], i) => ({
      row,
      col,
      uid: i + 1,
      kind,
      texture,
      color: [200, 60, 40] as [number, number, number],
    })),
  };
}

export const knifePending: PendingQuery = {
  hypotheses: [
    ["the user avoids sharp objects", 0.8],
    ["the user avoids metal objects", 0.2],
  ],
  entropy: 0.5004,
  scene_a: scene("pair-a", [
    [10, 1, "pepper", "green"],
    [10, 10, "sink", "gray"],
    [10, 5, "knife", "silver"],
  ]),
  scene_b: scene("pair-b", [
    [10, 1, "pepper", "green"],
    [10, 10, "sink", "gray"],
  ]),
  distance: 0.2424,
};

export const uniformPending: PendingQuery = {
  hypotheses: [
    ["the user's favorite food is apples", 0.2],
    ["the user's favorite food is tomatoes", 0.2],
    ["the user's favorite food is peaches", 0.2],
    ["the user's favorite food is peppers", 0.2],
    ["the user's favorite food is bread", 0.2],
  ],
  entropy: Math.log(5),
  scene_a: scene("fav-a", [
    [6, 1, "peach", "orange"],
    [6, 4, "apple", "red"],
  ]),
  scene_b: scene("fav-b", [[6, 7, "peach", "orange"]]),
};

export const fourMethodReport: ReportView = {
  spec_id: "pick_ripe",
  results: [
    { method: "gcbc", success_mean: 0.3, success_stderr: 0.05 },
    { method: "lga", success_mean: 0.44, success_stderr: 0.08 },
    { method: "plga_passive", success_mean: 1.0, success_stderr: 0.0 },
    { method: "plga_active", success_mean: 1.0, success_stderr: 0.0 },
  ],
  theta_hat: "the user prefers ripe tomatoes",
  final_loss: 0.0001,
  mask_preview: {
    scene: scene("mask-scene", [
      [6, 1, "tomato", "red"],
      [2, 2, "flower", "yellow"],
    ]),
    mask: Array.from({ length: 12 }, (_, r) =>
      Array.from({ length: 12 }, (_, c) => (r === 6 && c === 1 ? 1 : 0))
    ),
  },
};

export function sessionView(overrides: Partial<SessionView> = {}): SessionView {
  return {
    id: "abc123",
    spec_id: "pick_favorite_food",
    method: "plga_active",
    seed: 1,
    state: "awaiting_human",
    pending: uniformPending,
    resolution: null,
    report: null,
    error: null,
    ...overrides,
  };
}
