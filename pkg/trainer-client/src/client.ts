import { z } from "zod";

import { ResponseFormatError, TransportError, ValidationError } from "./errors.js";
import {
  AdvantagesResponse,
  advantagesResponseSchema,
  EaraResponse,
  earaResponseSchema,
  HealthResponse,
  healthResponseSchema,
} from "./schemas.js";

export interface EvidenceInput {
  question_index?: number;
  score: number;
  retrieved_item_ids: number[];
  origin_steps: number[];
}

export interface ClientOptions {
  /** Service base URL; falls back to the FINEMEM_SERVICE_URL env var. */
  baseUrl?: string;
  /** Per-attempt timeout in milliseconds. */
  timeoutMs?: number;
  /** Extra attempts after the first; >= 0. */
  maxRetries?: number;
  /** Delay before retry n (ms); the last entry repeats. */
  backoffMs?: number[];
}

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Thin transport wrapper around the reward service. All numeric truth
 * lives server-side; this client only ships requests, retries transport
 * failures and 503 (never 4xx), and validates response shapes.
 */
export class TrainerClient {
  readonly baseUrl: string;
  readonly timeoutMs: number;
  readonly maxRetries: number;
  readonly backoffMs: number[];

  constructor(options: ClientOptions = {}) {
    const base = options.baseUrl ?? process.env.FINEMEM_SERVICE_URL;
    if (!base) {
      throw new Error("no base URL: pass baseUrl or set FINEMEM_SERVICE_URL");
    }
    this.baseUrl = base.replace(/\/+$/, "");
    this.timeoutMs = options.timeoutMs ?? 30_000;
    this.maxRetries = options.maxRetries ?? 2;
    if (this.maxRetries < 0) {
      throw new Error("maxRetries must be >= 0");
    }
    this.backoffMs = options.backoffMs ?? [250, 500, 1000];
  }

  async eara(
    necInputs: EvidenceInput[],
    T: number,
    beta: number,
    rGlobal?: number
  ): Promise<EaraResponse> {
    const body: Record<string, unknown> = { nec_inputs: necInputs, T, beta };
    if (rGlobal !== undefined) {
      body.r_global = rGlobal;
    }
    return this.post("/v1/eara", body, earaResponseSchema);
  }

  async advantages(groups: number[][], epsilon: number): Promise<number[][]> {
    const result: AdvantagesResponse = await this.post(
      "/v1/advantages",
      { groups, epsilon },
      advantagesResponseSchema
    );
    return result.advantages;
  }

  async health(): Promise<HealthResponse> {
    return this.request("GET", "/health", undefined, healthResponseSchema);
  }

  private async post<T>(path: string, body: unknown, schema: z.ZodType<T>): Promise<T> {
    return this.request("POST", path, body, schema);
  }

  private async request<T>(
    method: string,
    path: string,
    body: unknown,
    schema: z.ZodType<T>
  ): Promise<T> {
    const url = this.baseUrl + path;
    let lastFailure = "";
    for (let attempt = 0; attempt <= this.maxRetries; attempt++) {
      if (attempt > 0) {
        const step = Math.min(attempt - 1, this.backoffMs.length - 1);
        await sleep(this.backoffMs[step] ?? 0);
      }
      let response: Response;
      try {
        response = await fetch(url, {
          method,
          headers: body !== undefined ? { "content-type": "application/json" } : undefined,
          body: body !== undefined ? JSON.stringify(body) : undefined,
          signal: AbortSignal.timeout(this.timeoutMs),
        });
      } catch (err) {
        lastFailure = err instanceof Error ? err.message : String(err);
        continue; // transport failure: retryable
      }
      if (response.status === 503) {
        lastFailure = "503 over capacity";
        continue; // backpressure: retryable
      }
      if (!response.ok) {
        let detail: unknown;
        try {
          detail = await response.json();
        } catch {
          detail = await response.text().catch(() => "");
        }
        throw new ValidationError(response.status, detail);
      }
      let payload: unknown;
      try {
        payload = await response.json();
      } catch (err) {
        throw new ResponseFormatError(`response is not JSON: ${err}`);
      }
      const parsed = schema.safeParse(payload);
      if (!parsed.success) {
        throw new ResponseFormatError(`unexpected response shape: ${parsed.error.message}`);
      }
      return parsed.data;
    }
    throw new TransportError(
      `${method} ${url} failed after ${this.maxRetries + 1} attempt(s): ${lastFailure}`,
      this.maxRetries + 1
    );
  }
}
