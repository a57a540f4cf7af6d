/** DOM wiring: renders state.ts outputs and forwards user input. All domain
 * numbers come from the service verbatim. */

import { ApiError, ServiceClient, type ServiceContext, type SweepResponse } from "./api.js";
import {
  applySweepCell,
  buildHeatmap,
  defaultForm,
  describeApiError,
  metricCards,
  RequestTokens,
  RunHistory,
  toScenario,
  validateForm,
  type FormState,
} from "./state.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

export async function boot(baseUrl: string = ""): Promise<void> {
  const client = new ServiceClient(baseUrl);
  const ctx = await client.context();
  const history = new RunHistory();
  const tokens = new RequestTokens();
  let form = defaultForm(ctx);
  let lastSweep: SweepResponse | null = null;

  renderForm(form, ctx);
  $("context-info").textContent =
    `${ctx.n_zones} zones × ${ctx.n_hours} h (context ${ctx.version})`;

  $("scenario-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    void submitScenario();
  });
  $("run-sweep").addEventListener("click", () => void submitSweep());
  $("export-history").addEventListener("click", () => {
    const blob = new Blob([history.exportJson()], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "evresil-history.json";
    a.click();
    URL.revokeObjectURL(a.href);
  });

  function readForm(): FormState {
    return {
      multiplier: Number(($("f-multiplier") as HTMLInputElement).value),
      elasticity: Number(($("f-elasticity") as HTMLInputElement).value),
      policyKind: ($("f-policy") as HTMLSelectElement).value,
      shockStart: Number(($("f-shock-start") as HTMLInputElement).value),
      shockEnd: Number(($("f-shock-end") as HTMLInputElement).value),
      horizon: Number(($("f-horizon") as HTMLInputElement).value),
    };
  }

  function renderForm(f: FormState, c: ServiceContext): void {
    ($("f-multiplier") as HTMLInputElement).value = String(f.multiplier);
    ($("f-elasticity") as HTMLInputElement).value = String(f.elasticity);
    const policy = $("f-policy") as HTMLSelectElement;
    policy.innerHTML = "";
    for (const kind of c.defaults.policy_kinds) {
      const opt = document.createElement("option");
      opt.value = kind;
      opt.textContent = kind;
      opt.selected = kind === f.policyKind;
      policy.appendChild(opt);
    }
    ($("f-shock-start") as HTMLInputElement).value = String(f.shockStart);
    ($("f-shock-end") as HTMLInputElement).value = String(f.shockEnd);
    const horizon = $("f-horizon") as HTMLInputElement;
    horizon.value = String(f.horizon);
    horizon.max = String(c.defaults.horizon_max);
    refreshValidation();
  }

  function refreshValidation(): void {
    const errors = validateForm(readForm(), ctx);
    ($("submit-scenario") as HTMLButtonElement).disabled = Object.keys(errors).length > 0;
    $("form-errors").textContent = Object.values(errors).join("; ");
  }

  for (const id of ["f-multiplier", "f-elasticity", "f-shock-start", "f-shock-end", "f-horizon"]) {
    $(id).addEventListener("input", refreshValidation);
  }

  async function submitScenario(): Promise<void> {
    form = readForm();
    const token = tokens.issue();
    setStatus("running scenario…");
    try {
      const res = await client.scenario(toScenario(form, ctx), ctx.version);
      if (!tokens.isCurrent(token)) return; // superseded by a newer submit
      history.add(res.scenario, res.report);
      renderCards(res.report);
      renderTrajectory(res.trajectory.backlog);
      renderHistory();
      setStatus("");
    } catch (err) {
      if (tokens.isCurrent(token)) setStatus(errorText(err));
    }
  }

  async function submitSweep(): Promise<void> {
    const token = tokens.issue();
    setStatus("running sweep…");
    try {
      const res = await client.sweep(
        ctx.defaults.multiplier_choices,
        ctx.defaults.elasticity_choices,
        ($("f-policy") as HTMLSelectElement).value,
        { horizon: readForm().horizon },
        ctx.version,
      );
      if (!tokens.isCurrent(token)) return;
      lastSweep = res;
      renderHeatmap(res);
      setStatus(res.boundary.warning ?? "");
    } catch (err) {
      if (tokens.isCurrent(token)) setStatus(errorText(err));
    }
  }

  function renderCards(report: Parameters<typeof metricCards>[0]): void {
    const host = $("metric-cards");
    host.innerHTML = "";
    for (const card of metricCards(report)) {
      const div = document.createElement("div");
      div.className = "card";
      const label = document.createElement("div");
      label.className = "card-label";
      label.textContent = card.label;
      const value = document.createElement("div");
      value.className = "card-value";
      value.textContent = card.value;
      div.append(label, value);
      if (card.badge) {
        const badge = document.createElement("span");
        badge.className = "badge";
        badge.textContent = card.badge;
        div.appendChild(badge);
      }
      host.appendChild(div);
    }
  }

  function renderTrajectory(series: { hours: number[]; values: number[] }): void {
    const canvas = $("trajectory") as unknown as HTMLCanvasElement;
    const g = canvas.getContext("2d");
    if (!g) return;
    g.clearRect(0, 0, canvas.width, canvas.height);
    const maxV = Math.max(1e-9, ...series.values);
    const maxH = Math.max(1, ...series.hours);
    g.beginPath();
    series.hours.forEach((h, i) => {
      const x = (h / maxH) * canvas.width;
      const y = canvas.height - (series.values[i]! / maxV) * canvas.height;
      i === 0 ? g.moveTo(x, y) : g.lineTo(x, y);
    });
    g.strokeStyle = "#2b6cb0";
    g.stroke();
  }

  function renderHeatmap(sweep: SweepResponse): void {
    const grid = buildHeatmap(sweep);
    const host = $("heatmap");
    host.innerHTML = "";
    for (const row of grid.rows) {
      const tr = document.createElement("div");
      tr.className = "heat-row";
      for (const cell of row) {
        const td = document.createElement("button");
        td.className = "heat-cell" + (cell.censored ? " censored" : "");
        const frac = grid.maxDeltaAuc > 0 ? cell.deltaAuc / grid.maxDeltaAuc : 0;
        td.style.background = `rgba(197, 48, 48, ${frac.toFixed(3)})`;
        td.title = `m=${cell.multiplier}, ε=${cell.elasticity}: ΔAUC ${cell.deltaAuc.toFixed(1)}`;
        td.addEventListener("click", () => {
          form = applySweepCell(readForm(), cell.multiplier, cell.elasticity);
          renderForm(form, ctx);
        });
        tr.appendChild(td);
      }
      host.appendChild(tr);
    }
  }

  function renderHistory(): void {
    const host = $("history");
    host.innerHTML = "";
    for (const entry of [...history.list()].reverse()) {
      const li = document.createElement("li");
      li.textContent =
        `${entry.at} — m=${entry.scenario.multiplier} ${entry.scenario.policy.kind}: ` +
        `ΔAUC ${entry.report.delta_auc.toFixed(1)}` +
        (entry.report.censored ? " (censored)" : "");
      host.appendChild(li);
    }
  }

  function setStatus(text: string): void {
    $("status").textContent = text;
  }

  function errorText(err: unknown): string {
    if (err instanceof ApiError) return describeApiError(err.status, err.message, err.field);
    return err instanceof Error ? err.message : String(err);
  }
}

if (typeof document !== "undefined" && document.getElementById("scenario-form")) {
  void boot();
}
