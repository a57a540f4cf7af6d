/** UI state and pure presentation logic, kept framework-free so it is
 * directly unit-testable. The DOM layer in app.ts only renders what these
 * functions return. */

import type { Report, Scenario, ServiceContext, SweepResponse } from "./api.js";

export interface FormState {
  multiplier: number;
  elasticity: number;
  policyKind: string;
  shockStart: number;
  shockEnd: number;
  horizon: number;
}

export function defaultForm(ctx: ServiceContext): FormState {
  const s = ctx.defaults.scenario;
  return {
    multiplier: s.multiplier,
    elasticity: s.policy.elasticity,
    policyKind: "hybrid",
    shockStart: s.shock_start,
    shockEnd: s.shock_end,
    horizon: Math.min(s.horizon, ctx.defaults.horizon_max),
  };
}

/** Field-level validation mirroring the service's rules so invalid
 * combinations are disabled before submission. */
export function validateForm(form: FormState, ctx: ServiceContext): Record<string, string> {
  const errors: Record<string, string> = {};
  if (!(form.multiplier >= 1)) errors.multiplier = "multiplier must be at least 1";
  if (!(form.elasticity <= 0)) errors.elasticity = "elasticity must be zero or negative";
  if (!ctx.defaults.policy_kinds.includes(form.policyKind)) {
    errors.policyKind = `unknown policy ${form.policyKind}`;
  }
  if (form.shockStart < 0) errors.shockStart = "shock start must be non-negative";
  if (form.shockEnd <= form.shockStart) errors.shockEnd = "shock must end after it starts";
  if (form.horizon < form.shockEnd) errors.horizon = "horizon must cover the shock";
  if (form.horizon > ctx.defaults.horizon_max) {
    errors.horizon = `horizon capped at ${ctx.defaults.horizon_max}`;
  }
  return errors;
}

export function toScenario(form: FormState, ctx: ServiceContext): Scenario {
  const base = ctx.defaults.scenario;
  return {
    ...base,
    multiplier: form.multiplier,
    shock_start: form.shockStart,
    shock_end: form.shockEnd,
    horizon: form.horizon,
    policy: {
      ...base.policy,
      kind: form.policyKind as Scenario["policy"]["kind"],
      elasticity: form.elasticity,
    },
  };
}

/** Clicking a sweep heatmap cell loads that cell's coordinates into the form. */
export function applySweepCell(form: FormState, multiplier: number, elasticity: number): FormState {
  return { ...form, multiplier, elasticity };
}

export interface MetricCard {
  label: string;
  value: string;
  badge: string | null;
}

const fmt = (x: number, digits = 1): string =>
  x.toLocaleString("en-US", { maximumFractionDigits: digits });

/** Metric cards are verbatim service numbers, formatted only. A censored
 * recovery time carries a badge because the true value is only known to be
 * at least the reported one. */
export function metricCards(report: Report): MetricCard[] {
  return [
    { label: "Excess backlog area (kWh·h)", value: fmt(report.delta_auc), badge: null },
    {
      label: "Recovery time (h)",
      value: fmt(report.delta_rt, 0),
      badge: report.censored ? "censored at horizon" : null,
    },
    { label: "Peak excess backlog (kWh)", value: fmt(report.peak), badge: null },
    { label: "Energy not served (kWh)", value: fmt(report.ens), badge: null },
  ];
}

export interface HeatmapCell {
  multiplier: number;
  elasticity: number;
  deltaAuc: number;
  censored: boolean;
}

export interface HeatmapGrid {
  multipliers: number[];
  elasticities: number[];
  rows: HeatmapCell[][];
  maxDeltaAuc: number;
}

/** Rows ordered by descending multiplier (severest shock on top), columns by
 * ascending elasticity magnitude. */
export function buildHeatmap(sweep: SweepResponse): HeatmapGrid {
  const multipliers = [...new Set(sweep.cells.map((c) => c.multiplier))].sort((a, b) => b - a);
  const elasticities = [...new Set(sweep.cells.map((c) => c.elasticity))].sort((a, b) => a - b);
  const byKey = new Map(
    sweep.cells.map((c) => [`${c.multiplier}|${c.elasticity}`, c] as const),
  );
  const rows = multipliers.map((m) =>
    elasticities.map((e) => {
      const cell = byKey.get(`${m}|${e}`);
      if (!cell) throw new Error(`sweep grid missing cell (${m}, ${e})`);
      return {
        multiplier: m,
        elasticity: e,
        deltaAuc: cell.report.delta_auc,
        censored: cell.report.censored,
      };
    }),
  );
  const maxDeltaAuc = Math.max(0, ...sweep.cells.map((c) => c.report.delta_auc));
  return { multipliers, elasticities, rows, maxDeltaAuc };
}

export interface HistoryEntry {
  at: string;
  scenario: Scenario;
  report: Report;
}

/** Client-side only; the service keeps no run state. */
export class RunHistory {
  private entries: HistoryEntry[] = [];

  add(scenario: Scenario, report: Report, now: () => string = () => new Date().toISOString()): void {
    this.entries.push({ at: now(), scenario, report });
  }

  list(): readonly HistoryEntry[] {
    return this.entries;
  }

  exportJson(): string {
    return JSON.stringify(this.entries, null, 2);
  }
}

/** Monotone token source: a response is stale when a newer request was
 * issued after it, and stale responses must not reach the screen. */
export class RequestTokens {
  private latest = 0;

  issue(): number {
    return ++this.latest;
  }

  isCurrent(token: number): boolean {
    return token === this.latest;
  }
}

export function describeApiError(status: number, message: string, field: string | null): string {
  if (status === 413) return "Grid too large — shrink the multiplier or elasticity lists.";
  if (status === 409) return "The service reloaded its data — refresh to pick up the new context.";
  if (status === 503) return "The service is still loading its context — retry shortly.";
  if (field) return `${field}: ${message}`;
  return message;
}
