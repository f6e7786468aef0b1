// Payload shapes served by the gateway API, plus shape guards so a broken
// payload surfaces as an error banner instead of NaN-filled markup.

export interface LinkedAddress {
  addr: string;
  type: string;
  kappa: number;
  heuristic: string;
}

export interface TornadoStats {
  deposit_count: number;
  withdraw_count: number;
  linked_withdraw_count: number;
}

export interface AddressSummary {
  addr: string;
  score_display: number;
  linked_addresses: LinkedAddress[];
  tornado_stats: TornadoStats;
}

export interface RevealRecord {
  tx_hash: string;
  kind: string;
  pool_id: string;
  heuristic: string;
  confidence: number;
  timestamp: number;
}

export interface WeeklyBucket {
  week_index: number;
  reveals: RevealRecord[];
}

export interface RevealTimeline {
  addr: string;
  weekly_buckets: WeeklyBucket[];
  stats: {
    reveal_count: number;
    population_mean: number;
  };
}

export interface PoolAudit {
  pool_id: string;
  total_deposits: number;
  compromised_deposits: number;
  true_anonymity_set: number;
}

export interface PoolInfo {
  pool_id: string;
  currency: string;
  denomination: string;
  ap_rate: string | null;
  total_deposits: number;
}

export class MalformedPayload extends Error {}

function fail(what: string): never {
  throw new MalformedPayload(`malformed payload: ${what}`);
}

export function assertAddressSummary(body: unknown): AddressSummary {
  const payload = body as AddressSummary;
  if (typeof payload?.addr !== "string") fail("addr");
  if (typeof payload.score_display !== "number") fail("score_display");
  if (!Array.isArray(payload.linked_addresses)) fail("linked_addresses");
  for (const row of payload.linked_addresses) {
    if (typeof row?.addr !== "string" || typeof row?.kappa !== "number") {
      fail("linked_addresses row");
    }
  }
  if (typeof payload.tornado_stats?.deposit_count !== "number") {
    fail("tornado_stats");
  }
  return payload;
}

export function assertTimeline(body: unknown): RevealTimeline {
  const payload = body as RevealTimeline;
  if (typeof payload?.addr !== "string") fail("addr");
  if (!Array.isArray(payload.weekly_buckets)) fail("weekly_buckets");
  for (const bucket of payload.weekly_buckets) {
    if (typeof bucket?.week_index !== "number" || !Array.isArray(bucket?.reveals)) {
      fail("weekly_buckets entry");
    }
  }
  if (typeof payload.stats?.reveal_count !== "number") fail("stats");
  return payload;
}

export function assertPoolAudit(body: unknown): PoolAudit {
  const payload = body as PoolAudit;
  if (typeof payload?.pool_id !== "string") fail("pool_id");
  if (typeof payload.total_deposits !== "number") fail("total_deposits");
  if (typeof payload.true_anonymity_set !== "number") fail("true_anonymity_set");
  return payload;
}
