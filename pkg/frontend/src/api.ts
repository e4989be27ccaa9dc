// Typed client for the node HTTP API. All mutations are signed locally and
// travel through POST /tx; the fetch implementation is injectable so tests
// can intercept and inspect every byte that would leave the browser.

import { canonicalStringify, Json } from "./canonical.js";
import { Command } from "./commands.js";
import { KeyPair, sign } from "./crypto.js";
import { bytesToHex, concatBytes, utf8 } from "./hex.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ApiError {
  error: string;
  reason: string;
  status: number;
}

export type ApiResult<T> = { ok: true; data: T } | { ok: false; error: ApiError };

export interface Receipt {
  tx_hash: string;
  status: "pending" | "committed" | "rejected" | "unknown";
  height?: number;
  outcome?: "allow" | "deny";
  reason?: string;
}

export interface SessionInfo {
  token: string;
  address: string;
  role: "patient" | "doctor" | "admin";
}

function u32(value: number): Uint8Array {
  const out = new Uint8Array(4);
  new DataView(out.buffer).setUint32(0, value, false);
  return out;
}

function u64(value: number): Uint8Array {
  const out = new Uint8Array(8);
  new DataView(out.buffer).setBigUint64(0, BigInt(value), false);
  return out;
}

function lengthPrefixed(data: Uint8Array): Uint8Array {
  return concatBytes(u32(data.length), data);
}

/** The exact bytes the node hashes and verifies for a transaction. */
export function txSigningBytes(
  sender: string,
  nonce: number,
  commandBytes: Uint8Array,
  timestamp: number,
): Uint8Array {
  return concatBytes(
    utf8("MLTX1"),
    lengthPrefixed(utf8(sender)),
    u64(nonce),
    lengthPrefixed(commandBytes),
    u64(timestamp),
  );
}

export class ApiClient {
  private token: string | null = null;

  constructor(
    readonly base: string,
    private readonly fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  session(): string | null {
    return this.token;
  }

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.token) headers.authorization = `Bearer ${this.token}`;
    return headers;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: Json,
  ): Promise<ApiResult<T>> {
    const response = await this.fetchImpl(`${this.base}${path}`, {
      method,
      headers: this.headers(),
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (response.ok) {
      return { ok: true, data: (await response.json()) as T };
    }
    let payload: { error?: string; reason?: string } = {};
    try {
      payload = await response.json();
    } catch {
      // non-JSON error body; keep the defaults
    }
    return {
      ok: false,
      error: {
        error: payload.error ?? "Unknown",
        reason: payload.reason ?? response.statusText,
        status: response.status,
      },
    };
  }

  get<T>(path: string): Promise<ApiResult<T>> {
    return this.request("GET", path);
  }

  async getBytes(path: string): Promise<ApiResult<Uint8Array>> {
    const response = await this.fetchImpl(`${this.base}${path}`, {
      method: "GET",
      headers: this.headers(),
    });
    if (!response.ok) {
      let payload: { error?: string; reason?: string } = {};
      try {
        payload = await response.json();
      } catch {
        /* keep defaults */
      }
      return {
        ok: false,
        error: {
          error: payload.error ?? "Unknown",
          reason: payload.reason ?? response.statusText,
          status: response.status,
        },
      };
    }
    return { ok: true, data: new Uint8Array(await response.arrayBuffer()) };
  }

  // ---- auth -------------------------------------------------------------

  async login(keypair: KeyPair): Promise<ApiResult<SessionInfo>> {
    const challenge = await this.request<{ nonce: string }>("POST", "/auth/challenge", {
      address: keypair.address,
    });
    if (!challenge.ok) return challenge;
    const nonceBytes = Uint8Array.from(
      challenge.data.nonce.match(/.{2}/g)!.map((b) => parseInt(b, 16)),
    );
    const signature = await sign(keypair, nonceBytes);
    const result = await this.request<SessionInfo & { expires_in_s: number }>(
      "POST",
      "/auth/login",
      { address: keypair.address, signature: bytesToHex(signature) },
    );
    if (result.ok) this.token = result.data.token;
    return result;
  }

  async logout(): Promise<void> {
    if (this.token) await this.request("POST", "/auth/logout");
    this.token = null;
  }

  // ---- transactions ---------------------------------------------------------

  async submit(
    keypair: KeyPair,
    nonce: number,
    command: Command,
  ): Promise<ApiResult<Receipt>> {
    const timestamp = Date.now();
    // the node verifies and stores exactly these bytes, so the signed
    // canonical string travels verbatim instead of being re-serialized
    const commandJson = canonicalStringify(command as Json);
    const body = txSigningBytes(keypair.address, nonce, utf8(commandJson), timestamp);
    const signature = await sign(keypair, body);
    return this.request<Receipt>("POST", "/tx", {
      sender: keypair.address,
      nonce,
      command: commandJson,
      timestamp,
      signature: bytesToHex(signature),
    });
  }

  async receipt(txHash: string): Promise<ApiResult<Receipt>> {
    return this.request("GET", `/tx/${txHash}`);
  }

  async waitCommitted(
    txHash: string,
    { timeoutMs = 15_000, intervalMs = 100 } = {},
  ): Promise<Receipt> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const result = await this.receipt(txHash);
      if (result.ok && result.data.status !== "pending") return result.data;
      if (Date.now() > deadline) {
        throw new Error(`transaction ${txHash} still pending after ${timeoutMs}ms`);
      }
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }

  /** Submit, then poll until the ledger settles it. */
  async submitAndWait(
    keypair: KeyPair,
    nonce: number,
    command: Command,
  ): Promise<ApiResult<Receipt>> {
    const submitted = await this.submit(keypair, nonce, command);
    if (!submitted.ok) return submitted;
    const receipt = await this.waitCommitted(submitted.data.tx_hash);
    return { ok: true, data: receipt };
  }
}
