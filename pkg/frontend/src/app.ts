// Application controller: consent -> (qualification) -> task-block loop.

import {
  ApiClient,
  CampaignExhaustedError,
  NotQualifiedError,
  SessionExpiredError,
} from "./api";
import type { Battery } from "./battery";
import { renderBlock, renderConsent, renderQualification, renderSessionExpired, renderTerminal } from "./render";
import { BlockSession } from "./state";

export interface AppConfig {
  campaignId: string;
  workerId: string;
}

export class AnnotationApp {
  session: BlockSession | null = null;
  private battery: Battery | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private config: AppConfig,
  ) {}

  async start(): Promise<void> {
    const info = await this.api.getCampaign(this.config.campaignId);
    this.battery = await this.api.getBattery(info.battery);
    renderConsent(this.root, info.notices, () => {
      void this.loadNextBlock();
    });
  }

  private async runQualification(): Promise<void> {
    const { items } = await this.api.getQualification();
    renderQualification(this.root, items, this.battery!, (answers) => {
      void (async () => {
        const result = await this.api.submitQualification(this.config.workerId, answers);
        if (result.qualification === "qualified") {
          await this.loadNextBlock();
        } else {
          renderTerminal(this.root, "blocked-screen", "Qualification not passed. Thank you for your time.");
        }
      })();
    });
  }

  async loadNextBlock(): Promise<void> {
    try {
      const block = await this.api.fetchBlock(this.config.campaignId, this.config.workerId);
      this.session = new BlockSession(block, this.battery!);
      this.renderCurrentBlock();
    } catch (error) {
      if (error instanceof NotQualifiedError) {
        await this.runQualification();
      } else if (error instanceof CampaignExhaustedError) {
        renderTerminal(this.root, "done-screen", "No more blocks available. Thank you!");
      } else if (error instanceof SessionExpiredError) {
        this.promptReauth(() => void this.loadNextBlock());
      } else {
        throw error;
      }
    }
  }

  renderCurrentBlock(): void {
    if (!this.session) {
      return;
    }
    renderBlock(this.root, this.session, {
      onChange: () => {},
      onSubmit: () => {
        void this.submitCurrent();
      },
      onNext: () => {
        void this.loadNextBlock();
      },
    });
  }

  async submitCurrent(): Promise<void> {
    const session = this.session;
    if (!session || !session.beginSubmit()) {
      return; // duplicate click, incomplete answers, or already submitted
    }
    this.renderCurrentBlock();
    try {
      const result = await this.api.submitBlock(session.block.block_id, session.serializedPayload());
      session.submitSucceeded(result.status === "accepted" ? "accepted" : "flagged");
    } catch (error) {
      session.submitFailed();
      if (error instanceof SessionExpiredError) {
        this.renderCurrentBlock();
        this.promptReauth(() => void this.submitCurrent());
        return;
      }
    }
    this.renderCurrentBlock();
  }

  private promptReauth(resume: () => void): void {
    renderSessionExpired(this.root, (token) => {
      this.api.setToken(token);
      resume();
    });
  }
}
