// Typed client for the annotation service API (everything under /v1).
// The fetch implementation is injected so tests can run against a mock
// service; 401 responses surface as SessionExpiredError so the UI can
// prompt for re-authentication without losing entered answers.

import type { Battery } from "./battery";

export interface BlockItem {
  index: number;
  a: string;
  b: string;
  group_a: string;
  group_b: string;
}

export interface Block {
  block_id: string;
  campaign_id: string;
  worker_id: string;
  explanation_index: number;
  items: BlockItem[];
}

export interface CampaignInfo {
  campaign_id: string;
  battery: string;
  state: string;
  votes_per_pair: number;
  size: number;
  notices: Record<string, string>;
}

export interface QualificationItemView {
  index: number;
  a: string;
  b: string;
}

export class SessionExpiredError extends Error {
  constructor() {
    super("session expired");
  }
}

export class CampaignExhaustedError extends Error {}

export class NotQualifiedError extends Error {}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private token: string,
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const headers = {
      "Content-Type": "application/json",
      Authorization: `Bearer ${this.token}`,
      ...(init.headers ?? {}),
    };
    const response = await this.fetchFn(`${this.baseUrl}${path}`, { ...init, headers });
    if (response.status === 401) {
      throw new SessionExpiredError();
    }
    return response;
  }

  private async requestJson<T>(path: string, init: RequestInit = {}): Promise<T> {
    const response = await this.request(path, init);
    if (!response.ok) {
      const detail = await response.text();
      throw new Error(`${response.status}: ${detail}`);
    }
    return (await response.json()) as T;
  }

  getBattery(name: string): Promise<Battery> {
    return this.requestJson<Battery>(`/v1/battery/${name}`);
  }

  getCampaign(campaignId: string): Promise<CampaignInfo> {
    return this.requestJson<CampaignInfo>(`/v1/campaigns/${campaignId}`);
  }

  getQualification(): Promise<{ items: QualificationItemView[] }> {
    return this.requestJson(`/v1/qualification`);
  }

  submitQualification(workerId: string, answers: number[]): Promise<{ qualification: string }> {
    return this.requestJson(`/v1/qualification`, {
      method: "POST",
      body: JSON.stringify({ worker_id: workerId, answers }),
    });
  }

  async fetchBlock(campaignId: string, workerId: string): Promise<Block> {
    const response = await this.request(`/v1/campaigns/${campaignId}/blocks`, {
      method: "POST",
      body: JSON.stringify({ worker_id: workerId }),
    });
    if (response.status === 409) {
      throw new CampaignExhaustedError(await response.text());
    }
    if (response.status === 400) {
      const detail = await response.text();
      if (detail.includes("not qualified")) {
        throw new NotQualifiedError(detail);
      }
      throw new Error(detail);
    }
    if (!response.ok) {
      throw new Error(`${response.status}: ${await response.text()}`);
    }
    return (await response.json()) as Block;
  }

  /** Submit the frozen payload string exactly as serialized by the view. */
  async submitBlock(blockId: string, payload: string): Promise<{ status: string }> {
    const response = await this.request(`/v1/blocks/${blockId}/submit`, {
      method: "POST",
      body: payload,
    });
    if (!response.ok) {
      throw new Error(`${response.status}: ${await response.text()}`);
    }
    return (await response.json()) as { status: string };
  }
}
