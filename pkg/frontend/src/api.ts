// Thin fetch client over the gateway JSON API. The private compromise
// check deliberately has no method taking a full address: callers hash
// locally and pass only the 4-character prefix.

import type { AddressSummary, PoolAudit, PoolInfo, RevealTimeline } from "./types.js";
import { assertAddressSummary, assertPoolAudit, assertTimeline } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public code: string) {
    super(`API error ${status}: ${code}`);
  }
}

export class NetworkError extends Error {}

export class ApiClient {
  constructor(private baseUrl: string = "") {}

  private async get(path: string): Promise<unknown> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path);
    } catch {
      throw new NetworkError("network request failed");
    }
    if (!response.ok) {
      let code = "unexpected_error";
      try {
        const body = (await response.json()) as { error?: string };
        if (body.error) code = body.error;
      } catch {
        // non-JSON error body; keep the generic code
      }
      throw new ApiError(response.status, code);
    }
    return response.json();
  }

  async addressSummary(addr: string): Promise<AddressSummary> {
    return assertAddressSummary(
      await this.get(`/api/address/${encodeURIComponent(addr)}`),
    );
  }

  async revealTimeline(addr: string): Promise<RevealTimeline> {
    return assertTimeline(
      await this.get(`/api/transactions/${encodeURIComponent(addr)}`),
    );
  }

  async poolAudit(poolId: string): Promise<PoolAudit> {
    return assertPoolAudit(
      await this.get(`/api/pool/${encodeURIComponent(poolId)}`),
    );
  }

  async pools(): Promise<PoolInfo[]> {
    const body = (await this.get("/api/pools")) as { pools?: PoolInfo[] };
    return body.pools ?? [];
  }

  async checkDigests(prefix: string): Promise<string[]> {
    if (!/^[0-9a-f]{4}$/.test(prefix)) {
      throw new Error("check prefix must be exactly 4 hex characters");
    }
    const body = (await this.get(`/api/check/${prefix}`)) as {
      digests?: string[];
    };
    return body.digests ?? [];
  }
}
