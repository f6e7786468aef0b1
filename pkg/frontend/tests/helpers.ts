// Test doubles: a fetch stub that records every URL it sees, plus payload
// fixtures mirroring the gateway API.

import { vi } from "vitest";

import type { AddressSummary, PoolAudit, RevealTimeline } from "../src/types.js";

export const ADDR_A = "0x" + "aa".repeat(20);
export const ADDR_B = "0x" + "bb".repeat(20);
export const ADDR_C = "0x" + "cc".repeat(20);

export function summaryFixture(): AddressSummary {
  return {
    addr: ADDR_A,
    score_display: 71,
    linked_addresses: [
      { addr: ADDR_B, type: "deposit", kappa: 1.0, heuristic: "dar" },
      { addr: ADDR_C, type: "exchange", kappa: 0.5, heuristic: "dar" },
    ],
    tornado_stats: {
      deposit_count: 3,
      withdraw_count: 2,
      linked_withdraw_count: 1,
    },
  };
}

export function emptySummaryFixture(): AddressSummary {
  return {
    addr: ADDR_A,
    score_display: 100,
    linked_addresses: [],
    tornado_stats: {
      deposit_count: 0,
      withdraw_count: 0,
      linked_withdraw_count: 0,
    },
  };
}

export function timelineFixture(): RevealTimeline {
  const reveal = (n: number, kind: string) => ({
    tx_hash: "0x" + n.toString(16).padStart(64, "0"),
    kind,
    pool_id: "1 ETH",
    heuristic: "address_match",
    confidence: 1.0,
    timestamp: 1_600_000_000 + n,
  });
  return {
    addr: ADDR_A,
    weekly_buckets: [
      { week_index: 0, reveals: [reveal(1, "withdraw"), reveal(2, "withdraw")] },
      { week_index: 1, reveals: [reveal(3, "deposit")] },
    ],
    stats: { reveal_count: 3, population_mean: 0.75 },
  };
}

export function auditFixture(): PoolAudit {
  return {
    pool_id: "1 ETH",
    total_deposits: 4,
    compromised_deposits: 1,
    true_anonymity_set: 3,
  };
}

export interface FetchStub {
  requests: string[];
  respond: (url: string) => unknown;
}

/** Install a fetch stub; `routes` maps a URL substring to its payload. */
export function stubFetch(
  routes: Record<string, unknown | ((url: string) => unknown)>,
): FetchStub {
  const stub: FetchStub = {
    requests: [],
    respond: (url: string) => {
      for (const [needle, payload] of Object.entries(routes)) {
        if (url.includes(needle)) {
          return typeof payload === "function"
            ? (payload as (u: string) => unknown)(url)
            : payload;
        }
      }
      return { error: "not_found" };
    },
  };
  vi.stubGlobal("fetch", vi.fn(async (url: string) => {
    stub.requests.push(url);
    const payload = stub.respond(url);
    if (payload instanceof Error) {
      throw payload;
    }
    const failed = (payload as { error?: string }).error !== undefined;
    return {
      ok: !failed,
      status: failed ? 404 : 200,
      json: async () => payload,
    } as Response;
  }));
  return stub;
}

export async function flush(): Promise<void> {
  // Let queued promise callbacks (fetch handlers, renders) settle.
  for (let i = 0; i < 10; i += 1) {
    await Promise.resolve();
  }
}
