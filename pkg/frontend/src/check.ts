// Private compromise check. The address is hashed in the browser and only
// the first four hex characters of the digest ever reach the network; the
// returned candidate digests are compared locally.

import type { ApiClient } from "./api.js";

export async function sha256Hex(text: string): Promise<string> {
  const data = new TextEncoder().encode(text);
  const digest = await crypto.subtle.digest("SHA-256", data);
  return Array.from(new Uint8Array(digest))
    .map((byte) => byte.toString(16).padStart(2, "0"))
    .join("");
}

export async function checkAddressPrivately(
  api: ApiClient,
  addr: string,
): Promise<boolean> {
  const digest = await sha256Hex(addr.trim().toLowerCase());
  const candidates = await api.checkDigests(digest.slice(0, 4));
  return candidates.includes(digest);
}
