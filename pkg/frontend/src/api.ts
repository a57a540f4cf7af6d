/** Typed client for the scenario service. Every number shown in the UI comes
 * through these schemas; nothing is computed locally. */

import { z } from "zod";

export const PolicySchema = z.object({
  kind: z.enum(["none", "price", "capboost", "hybrid"]),
  delta_p: z.number(),
  elasticity: z.number().max(0),
  boost_frac: z.number().min(0),
  top_k: z.number().int().min(0),
});

export const ScenarioSchema = z.object({
  multiplier: z.number().min(1),
  shock_start: z.number().int().min(0),
  shock_end: z.number().int(),
  horizon: z.number().int().positive(),
  policy: PolicySchema,
  balk_threshold: z.number(),
  balk_rate: z.number().min(0).lt(1),
  recovery_theta_frac: z.number(),
  recovery_hold: z.number().int(),
  price_always_on: z.boolean(),
});

export const ReportSchema = z.object({
  delta_auc: z.number(),
  delta_rt: z.number(),
  censored: z.boolean(),
  peak: z.number(),
  ens: z.number(),
  policy: z.string(),
  multiplier: z.number(),
});

const SeriesSchema = z.object({
  hours: z.array(z.number()),
  values: z.array(z.number()),
});

export const ScenarioResponseSchema = z.object({
  context_version: z.string(),
  scenario: ScenarioSchema,
  report: ReportSchema,
  trajectory: z.object({
    backlog: SeriesSchema,
    served: SeriesSchema,
    lost: SeriesSchema,
  }),
  load_series: z.object({
    hour: z.array(z.number()),
    p_base_kw: z.array(z.number()),
    p_ev_kw: z.array(z.number()),
    p_total_kw: z.array(z.number()),
    lambda: z.array(z.number()),
    transformer_kw: z.number(),
    stress_threshold: z.number(),
  }),
});

export const SweepResponseSchema = z.object({
  context_version: z.string(),
  policy: z.string(),
  cells: z.array(
    z.object({
      multiplier: z.number(),
      elasticity: z.number(),
      report: ReportSchema,
    }),
  ),
  boundary: z.object({
    elasticities: z.array(z.number()),
    m_crit: z.array(z.number()),
    excluded_columns: z.array(z.number()),
    fit: z.object({ a: z.number(), b: z.number() }).nullable(),
    warning: z.string().nullable(),
  }),
});

export const ContextSchema = z.object({
  version: z.string(),
  n_zones: z.number().int(),
  n_hours: z.number().int(),
  split: z.object({ train_end: z.number(), valid_end: z.number() }),
  lut_provenance: z.record(z.unknown()),
  defaults: z.object({
    scenario: ScenarioSchema,
    multiplier_choices: z.array(z.number()),
    elasticity_choices: z.array(z.number()),
    policy_kinds: z.array(z.string()),
    horizon_max: z.number().int(),
  }),
  limits: z.object({
    max_sweep_cells: z.number().int(),
    max_trajectory_points: z.number().int(),
  }),
});

export type Policy = z.infer<typeof PolicySchema>;
export type Scenario = z.infer<typeof ScenarioSchema>;
export type Report = z.infer<typeof ReportSchema>;
export type ScenarioResponse = z.infer<typeof ScenarioResponseSchema>;
export type SweepResponse = z.infer<typeof SweepResponseSchema>;
export type ServiceContext = z.infer<typeof ContextSchema>;

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
    readonly field: string | null = null,
  ) {
    super(message);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

async function parseError(res: Response): Promise<ApiError> {
  let message = `HTTP ${res.status}`;
  let field: string | null = null;
  try {
    const body = (await res.json()) as { error?: string; field?: string };
    if (body.error) message = body.error;
    if (body.field) field = body.field;
  } catch {
    // non-JSON error body: keep the status line
  }
  return new ApiError(res.status, message, field);
}

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async get<T>(path: string, schema: z.ZodType<T>): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path);
    if (!res.ok) throw await parseError(res);
    return schema.parse(await res.json());
  }

  private async post<T>(path: string, body: unknown, schema: z.ZodType<T>): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw await parseError(res);
    return schema.parse(await res.json());
  }

  healthz(): Promise<{ status: string; context_loaded: boolean }> {
    return this.get(
      "/healthz",
      z.object({ status: z.string(), context_loaded: z.boolean() }),
    );
  }

  context(): Promise<ServiceContext> {
    return this.get("/api/context", ContextSchema);
  }

  /** Pins the context version so a restarted service answers 409 instead of
   * silently mixing artifacts. */
  scenario(spec: Scenario, contextVersion: string): Promise<ScenarioResponse> {
    return this.post(
      "/api/scenario",
      { ...spec, context_version: contextVersion },
      ScenarioResponseSchema,
    );
  }

  sweep(
    multipliers: number[],
    elasticities: number[],
    policy: string,
    scenario: Partial<Scenario>,
    contextVersion: string,
  ): Promise<SweepResponse> {
    return this.post(
      "/api/sweep",
      { multipliers, elasticities, policy, scenario, context_version: contextVersion },
      SweepResponseSchema,
    );
  }
}
