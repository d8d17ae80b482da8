/**
 * HTML renderers. Pure string builders so they are testable without a
 * DOM; app.ts assigns the output to container elements.
 */

import {
  GridVM,
  PendingQuery,
  ReportView,
  SessionView,
  deriveScenePair,
  entropyGaugeFraction,
} from "./model.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function renderGrid(grid: GridVM, label: string): string {
  const byCell = new Map(grid.cells.map((c) => [`${c.row}:${c.col}`, c]));
  const rows: string[] = [];
  for (let r = 0; r < grid.height; r++) {
    const cols: string[] = [];
    for (let c = 0; c < grid.width; c++) {
      const cell = byCell.get(`${r}:${c}`);
      if (!cell) {
        cols.push('<td class="empty"></td>');
      } else {
        const classes = cell.highlighted ? "object diff" : "object";
        cols.push(
          `<td class="${classes}" style="background:${cell.cssColor}" ` +
            `title="${escapeHtml(cell.caption)}">` +
            `<span class="kind">${escapeHtml(cell.kind)}</span></td>`
        );
      }
    }
    rows.push(`<tr>${cols.join("")}</tr>`);
  }
  return (
    `<figure class="scene"><figcaption>${escapeHtml(label)}</figcaption>` +
    `<table class="grid">${rows.join("")}</table></figure>`
  );
}

/** Side-by-side scene pair with differing objects highlighted. */
export function renderScenePair(pending: PendingQuery): string {
  const { gridA, gridB } = deriveScenePair(pending);
  if (!gridA || !gridB) {
    return '<p class="muted">No scene pair recorded for this query.</p>';
  }
  const distance =
    pending.distance === undefined
      ? ""
      : `<p class="distance">trajectory distance: ${pending.distance.toFixed(3)}</p>`;
  return (
    `<div class="scene-pair">${renderGrid(gridA, "first scene")}` +
    `${renderGrid(gridB, "second scene")}</div>${distance}`
  );
}

export function renderHypotheses(pending: PendingQuery): string {
  const gauge = entropyGaugeFraction(pending.entropy, pending.hypotheses.length);
  const items = pending.hypotheses
    .map(
      ([text, p]) =>
        `<li><span class="prob">${(p * 100).toFixed(1)}%</span> ${escapeHtml(text)}</li>`
    )
    .join("");
  return (
    `<div class="hypotheses"><div class="gauge" role="meter" aria-valuenow="${gauge.toFixed(3)}">` +
    `<div class="gauge-fill" style="width:${(gauge * 100).toFixed(1)}%"></div></div>` +
    `<p>entropy ${pending.entropy.toFixed(4)} nats</p>` +
    `<ol>${items}</ol></div>`
  );
}

/** Bar chart of per-method success with standard-error whiskers. */
export function renderReport(report: ReportView | null): string {
  if (!report) {
    return '<div class="spinner" aria-label="report pending">training…</div>';
  }
  const bars = report.results
    .map((r) => {
      const height = Math.round(r.success_mean * 100);
      const whisker = Math.round(r.success_stderr * 100);
      return (
        `<div class="bar-slot"><div class="bar" style="height:${height}%">` +
        `<div class="whisker" style="height:${2 * whisker}%"></div></div>` +
        `<span class="bar-label">${escapeHtml(r.method)}</span>` +
        `<span class="bar-value">${r.success_mean.toFixed(2)}</span></div>`
      );
    })
    .join("");
  const theta = report.theta_hat
    ? `<p>resolved preference: <strong>${escapeHtml(report.theta_hat)}</strong></p>`
    : "";
  return `<div class="report"><div class="bars">${bars}</div>${theta}${renderMaskPreview(report)}</div>`;
}

export function renderMaskPreview(report: ReportView): string {
  const preview = report.mask_preview;
  if (!preview) {
    return "";
  }
  const byCell = new Map(preview.scene.cells.map((c) => [`${c.row}:${c.col}`, c]));
  const rows: string[] = [];
  for (let r = 0; r < preview.mask.length; r++) {
    const cols: string[] = [];
    for (let c = 0; c < preview.mask[r].length; c++) {
      const kept = preview.mask[r][c] === 1;
      const cell = byCell.get(`${r}:${c}`);
      const classes = kept ? "kept" : cell ? "masked" : "empty";
      const title = cell ? ` title="${escapeHtml(`${cell.texture} ${cell.kind}`)}"` : "";
      cols.push(`<td class="${classes}"${title}></td>`);
    }
    rows.push(`<tr>${cols.join("")}</tr>`);
  }
  return (
    '<figure class="mask-preview"><figcaption>abstraction mask</figcaption>' +
    `<table class="grid">${rows.join("")}</table></figure>`
  );
}

export function renderStateBadge(session: SessionView): string {
  return `<span class="state state-${escapeHtml(session.state)}">${escapeHtml(session.state)}</span>`;
}

export function renderError(message: string | null): string {
  if (!message) {
    return "";
  }
  return `<div class="banner error" role="alert">${escapeHtml(message)}</div>`;
}
