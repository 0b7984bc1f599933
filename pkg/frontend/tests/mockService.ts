// In-memory stand-in for the annotation service, speaking the same /v1
// surface.  Battery definitions come from the shared packaged file, so the
// tests exercise the exact production wording.

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { Battery } from "../src/battery";
import type { Block } from "../src/api";

const HERE = dirname(fileURLToPath(import.meta.url));
const BATTERY_FILE = join(HERE, "..", "..", "src", "fairpairs", "data", "battery.json");

export function loadBatteries(): Record<string, { questions: Battery["questions"] }> {
  return JSON.parse(readFileSync(BATTERY_FILE, "utf-8"));
}

export function batteryPayload(name: string): Battery {
  const spec = loadBatteries()[name];
  return { name, questions: spec.questions };
}

export function makeBlock(batteryName: string, explanationIndex = 4): Block {
  const items = [];
  for (let i = 0; i < 11; i += 1) {
    items.push({
      index: i,
      a: `original comment ${i}`,
      b: `modified comment ${i}`,
      group_a: "Female",
      group_b: "Male",
    });
  }
  return {
    block_id: "block-1",
    campaign_id: "campaign-1",
    worker_id: "w1",
    explanation_index: explanationIndex,
    items,
  };
}

export interface MockOptions {
  battery?: string;
  submitOutcome?: "accepted" | "flagged";
  failSubmitTimes?: number; // reject with a network error this many times
  expireSubmitTimes?: number; // 401 this many times
  notQualifiedFirst?: boolean;
  blocksAvailable?: number;
}

export class MockService {
  submissions: Array<{ blockId: string; body: string }> = [];
  blockFetches = 0;
  qualificationSubmissions: number[][] = [];
  private failRemaining: number;
  private expireRemaining: number;
  private qualified: boolean;
  private blocksRemaining: number;
  readonly options: Required<Pick<MockOptions, "battery" | "submitOutcome">> & MockOptions;

  constructor(options: MockOptions = {}) {
    this.options = { battery: "fairness_only", submitOutcome: "accepted", ...options };
    this.failRemaining = options.failSubmitTimes ?? 0;
    this.expireRemaining = options.expireSubmitTimes ?? 0;
    this.qualified = !options.notQualifiedFirst;
    this.blocksRemaining = options.blocksAvailable ?? 1;
  }

  private json(payload: unknown, status = 200): Response {
    return new Response(JSON.stringify(payload), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");

    if (method === "GET" && path.startsWith("/v1/battery/")) {
      return this.json(batteryPayload(path.split("/").pop()!));
    }
    if (method === "GET" && /^\/v1\/campaigns\/[^/]+$/.test(path)) {
      return this.json({
        campaign_id: "campaign-1",
        battery: this.options.battery,
        state: "open",
        votes_per_pair: 1,
        size: 40,
        notices: {
          warning: "Please note that this study contains offensive content.",
          withdrawal: "You may withdraw your participation at any time.",
        },
      });
    }
    if (method === "GET" && path === "/v1/qualification") {
      const items = Array.from({ length: 10 }, (_, i) => ({ index: i, a: `gold ${i} a`, b: `gold ${i} b` }));
      return this.json({ items });
    }
    if (method === "POST" && path === "/v1/qualification") {
      this.qualificationSubmissions.push(JSON.parse(init!.body as string).answers);
      this.qualified = true;
      return this.json({ worker_id: "w1", qualification: "qualified" });
    }
    if (method === "POST" && /^\/v1\/campaigns\/[^/]+\/blocks$/.test(path)) {
      if (!this.qualified) {
        return new Response("worker w1 is not qualified", { status: 400 });
      }
      if (this.blocksRemaining <= 0) {
        return new Response("campaign exhausted", { status: 409 });
      }
      this.blocksRemaining -= 1;
      this.blockFetches += 1;
      return this.json(makeBlock(this.options.battery));
    }
    if (method === "POST" && /^\/v1\/blocks\/[^/]+\/submit$/.test(path)) {
      if (this.expireRemaining > 0) {
        this.expireRemaining -= 1;
        return new Response("invalid bearer token", { status: 401 });
      }
      if (this.failRemaining > 0) {
        this.failRemaining -= 1;
        throw new TypeError("network error");
      }
      const blockId = path.split("/")[3];
      this.submissions.push({ blockId, body: init!.body as string });
      return this.json({ block_id: blockId, status: this.options.submitOutcome });
    }
    return new Response("not found", { status: 404 });
  };
}
