// View-model for one task block.  The submission payload is a pure function
// of the recorded answers and explanation; it is frozen (serialized once) the
// moment submission starts, so a retry after a network failure resends
// byte-identical content.

import type { Battery } from "./battery";
import type { Block } from "./api";

export interface ItemResponse {
  answers: Record<string, number>;
  explanation: string | null;
}

export interface SubmissionPayload {
  responses: ItemResponse[];
}

export type SessionStatus = "editing" | "submitting" | "failed" | "done";

export class BlockSession {
  readonly block: Block;
  readonly battery: Battery;
  status: SessionStatus = "editing";
  outcome: "accepted" | "flagged" | null = null;
  explanation = "";
  private answers: Array<Record<string, number>>;
  private frozen: string | null = null;

  constructor(block: Block, battery: Battery) {
    this.block = block;
    this.battery = battery;
    this.answers = block.items.map(() => ({}));
  }

  setAnswer(itemIndex: number, questionKey: string, choice: number): void {
    if (this.status !== "editing") {
      return; // inputs are frozen once submission starts
    }
    this.answers[itemIndex][questionKey] = choice;
  }

  setExplanation(text: string): void {
    if (this.status !== "editing") {
      return;
    }
    this.explanation = text;
  }

  getAnswer(itemIndex: number, questionKey: string): number | undefined {
    return this.answers[itemIndex][questionKey];
  }

  itemComplete(itemIndex: number): boolean {
    return this.battery.questions.every((q) => this.answers[itemIndex][q.key] !== undefined);
  }

  answeredCount(): number {
    return this.block.items.filter((_, i) => this.itemComplete(i)).length;
  }

  /** Submission allowed only with every question answered on every item and
   *  a non-blank explanation on the required item. */
  isComplete(): boolean {
    return this.answeredCount() === this.block.items.length && this.explanation.trim().length > 0;
  }

  buildPayload(): SubmissionPayload {
    return {
      responses: this.block.items.map((item, i) => ({
        answers: { ...this.answers[i] },
        explanation: i === this.block.explanation_index ? this.explanation : null,
      })),
    };
  }

  /** Serialize once; later calls return the identical string. */
  serializedPayload(): string {
    if (this.frozen === null) {
      this.frozen = JSON.stringify(this.buildPayload());
    }
    return this.frozen;
  }

  beginSubmit(): boolean {
    if (this.status !== "editing" && this.status !== "failed") {
      return false; // duplicate click or already done
    }
    if (this.status === "editing" && !this.isComplete()) {
      return false;
    }
    this.status = "submitting";
    this.serializedPayload();
    return true;
  }

  submitSucceeded(outcome: "accepted" | "flagged"): void {
    this.status = "done";
    this.outcome = outcome;
  }

  submitFailed(): void {
    this.status = "failed";
  }
}
