import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api";
import { AnnotationApp } from "../src/app";
import { loadBatteries, MockService } from "./mockService";

function makeApp(mock: MockService): { app: AnnotationApp; root: HTMLElement } {
  const root = document.createElement("div");
  document.body.appendChild(root);
  const api = new ApiClient("http://service.test", "token", mock.fetch);
  const app = new AnnotationApp(root, api, { campaignId: "campaign-1", workerId: "w1" });
  return { app, root };
}

async function startOnBlock(mock: MockService) {
  const { app, root } = makeApp(mock);
  await app.start();
  await app.loadNextBlock();
  return { app, root };
}

function answerItem(root: HTMLElement, itemIndex: number, questionKeys: string[], choice = 0) {
  const item = root.querySelectorAll<HTMLElement>(".block-item")[itemIndex];
  for (const key of questionKeys) {
    const input = item.querySelector<HTMLInputElement>(
      `input[name="item${itemIndex}-${key}"][value="${choice}"]`,
    )!;
    input.checked = true;
    input.dispatchEvent(new Event("change"));
  }
}

function fillEverything(root: HTMLElement, questionKeys: string[], explanation = "both comments say the same thing") {
  const items = root.querySelectorAll(".block-item");
  for (let i = 0; i < items.length; i += 1) {
    answerItem(root, i, questionKeys);
  }
  const area = root.querySelector<HTMLTextAreaElement>("#explanation-input")!;
  area.value = explanation;
  area.dispatchEvent(new Event("input"));
}

function submitButton(root: HTMLElement): HTMLButtonElement {
  return root.querySelector<HTMLButtonElement>("#submit-block")!;
}

beforeEach(() => {
  document.body.replaceChildren();
});

describe("consent screen", () => {
  it("shows the campaign's warning and withdrawal notices before any block", async () => {
    const mock = new MockService();
    const { app, root } = makeApp(mock);
    await app.start();
    expect(root.querySelector(".warning-notice")?.textContent).toContain("offensive content");
    expect(root.querySelector(".withdrawal-notice")?.textContent).toContain("withdraw");
    expect(mock.blockFetches).toBe(0);
    root.querySelector<HTMLButtonElement>("#consent-continue")!.click();
    await vi.waitFor(() => expect(root.querySelector(".block-screen")).toBeTruthy());
  });
});

describe("fairness question rendering", () => {
  it("shows the exact four options from the shared battery definition", async () => {
    const mock = new MockService();
    const { root } = await startOnBlock(mock);
    const expected = loadBatteries().fairness_only.questions[0].options;
    expect(expected).toHaveLength(4);
    const firstItem = root.querySelector(".block-item")!;
    const rendered = Array.from(firstItem.querySelectorAll(".option-text")).map((n) => n.textContent);
    expect(rendered).toEqual(expected);
  });

  it("renders one four-option question per item in the fairness-only battery", async () => {
    const mock = new MockService();
    const { root } = await startOnBlock(mock);
    const items = root.querySelectorAll(".block-item");
    expect(items).toHaveLength(11);
    for (const item of items) {
      expect(item.querySelectorAll(".question")).toHaveLength(1);
      expect(item.querySelectorAll(".question-option")).toHaveLength(4);
    }
  });
});

describe("full battery", () => {
  it("substitutes the pair's groups into the transfer question and its options", async () => {
    const mock = new MockService({ battery: "full" });
    const { root } = await startOnBlock(mock);
    const firstItem = root.querySelector(".block-item")!;
    const transfer = firstItem.querySelector(".question-group_transfer")!;
    expect(transfer.querySelector(".question-text")?.textContent).toBe(
      "Is comment a) about Female and comment b) about Male?",
    );
    const options = Array.from(transfer.querySelectorAll(".option-text")).map((n) => n.textContent);
    expect(options).toContain("No, comment a) is not about Female");
    expect(options).toContain("No, comment b) is not about Male");
    expect(root.textContent).not.toContain("{group_a}");
  });

  it("renders the six-question battery on every item", async () => {
    const mock = new MockService({ battery: "full" });
    const { root } = await startOnBlock(mock);
    const expectedKeys = loadBatteries().full.questions.map((q) => q.key);
    expect(expectedKeys).toHaveLength(6);
    for (const item of root.querySelectorAll(".block-item")) {
      expect(item.querySelectorAll(".question")).toHaveLength(6);
    }
  });
});

describe("submission gating", () => {
  it("keeps submit disabled until every item is answered and the explanation is filled", async () => {
    const mock = new MockService();
    const { root } = await startOnBlock(mock);
    const keys = loadBatteries().fairness_only.questions.map((q) => q.key);
    expect(submitButton(root).disabled).toBe(true);

    for (let i = 0; i < 10; i += 1) {
      answerItem(root, i, keys);
    }
    expect(submitButton(root).disabled).toBe(true); // one item still open

    answerItem(root, 10, keys);
    expect(submitButton(root).disabled).toBe(true); // explanation still empty
    expect(root.querySelector(".progress")?.textContent).toBe("11 of 11 items answered");

    const area = root.querySelector<HTMLTextAreaElement>("#explanation-input")!;
    area.value = "   ";
    area.dispatchEvent(new Event("input"));
    expect(submitButton(root).disabled).toBe(true); // blank explanation does not count

    area.value = "they differ only in the group word";
    area.dispatchEvent(new Event("input"));
    expect(submitButton(root).disabled).toBe(false);
  });
});

describe("submission behaviour", () => {
  it("suppresses double clicks: one network submission per block", async () => {
    const mock = new MockService();
    const { root } = await startOnBlock(mock);
    fillEverything(root, ["fairness_average_american"]);
    const button = submitButton(root);
    button.click();
    button.click(); // double click on the same button
    await vi.waitFor(() => expect(root.querySelector(".outcome-notice")).toBeTruthy());
    expect(mock.submissions).toHaveLength(1);
    // and clicking the re-rendered button after completion does nothing
    submitButton(root).click();
    expect(mock.submissions).toHaveLength(1);
  });

  it("shows the acceptance acknowledgment", async () => {
    const mock = new MockService();
    const { root } = await startOnBlock(mock);
    fillEverything(root, ["fairness_average_american"]);
    submitButton(root).click();
    await vi.waitFor(() => expect(root.querySelector(".outcome-accepted")).toBeTruthy());
    expect(root.querySelector(".outcome-notice")?.textContent).toContain("accepted");
  });

  it("shows the review notice on a flagged outcome", async () => {
    const mock = new MockService({ submitOutcome: "flagged" });
    const { root } = await startOnBlock(mock);
    fillEverything(root, ["fairness_average_american"]);
    submitButton(root).click();
    await vi.waitFor(() => expect(root.querySelector(".outcome-flagged")).toBeTruthy());
    expect(root.querySelector(".review-notice")?.textContent).toContain("reviewer");
  });

  it("retries a failed submission with the byte-identical payload", async () => {
    const mock = new MockService({ failSubmitTimes: 1 });
    const { app, root } = await startOnBlock(mock);
    fillEverything(root, ["fairness_average_american"]);
    const frozen = app.session!.serializedPayload();
    submitButton(root).click();
    await vi.waitFor(() => expect(root.querySelector(".retry-notice")).toBeTruthy());
    expect(mock.submissions).toHaveLength(0);
    expect(submitButton(root).disabled).toBe(false);
    submitButton(root).click();
    await vi.waitFor(() => expect(root.querySelector(".outcome-notice")).toBeTruthy());
    expect(mock.submissions).toHaveLength(1);
    expect(mock.submissions[0].body).toBe(frozen);
  });

  it("payload is a pure function of the view state", async () => {
    const mock = new MockService();
    const { app, root } = await startOnBlock(mock);
    fillEverything(root, ["fairness_average_american"], "my explanation");
    const payload = app.session!.buildPayload();
    expect(payload.responses).toHaveLength(11);
    for (const [index, response] of payload.responses.entries()) {
      expect(response.answers).toEqual({ fairness_average_american: 0 });
      if (index === app.session!.block.explanation_index) {
        expect(response.explanation).toBe("my explanation");
      } else {
        expect(response.explanation).toBeNull();
      }
    }
    expect(app.session!.buildPayload()).toEqual(payload);
  });
});

describe("session expiry", () => {
  it("prompts for re-authentication without losing entered answers", async () => {
    const mock = new MockService({ expireSubmitTimes: 1 });
    const { app, root } = await startOnBlock(mock);
    fillEverything(root, ["fairness_average_american"], "kept across expiry");
    submitButton(root).click();
    await vi.waitFor(() => expect(root.querySelector(".session-expired")).toBeTruthy());
    expect(mock.submissions).toHaveLength(0);
    // answers survived
    expect(app.session!.getAnswer(3, "fairness_average_american")).toBe(0);
    expect(app.session!.explanation).toBe("kept across expiry");
    const tokenInput = root.querySelector<HTMLInputElement>("#reauth-token")!;
    tokenInput.value = "fresh-token";
    root.querySelector<HTMLButtonElement>("#reauth-continue")!.click();
    await vi.waitFor(() => expect(root.querySelector(".outcome-notice")).toBeTruthy());
    expect(mock.submissions).toHaveLength(1);
  });
});

describe("qualification flow", () => {
  it("runs the qualification and proceeds into the task loop on passing", async () => {
    const mock = new MockService({ notQualifiedFirst: true });
    const { app, root } = makeApp(mock);
    await app.start();
    await app.loadNextBlock();
    await vi.waitFor(() => expect(root.querySelector(".qualification-screen")).toBeTruthy());
    const quals = root.querySelectorAll(".qual-item");
    expect(quals).toHaveLength(10);
    const submit = root.querySelector<HTMLButtonElement>("#submit-qualification")!;
    expect(submit.disabled).toBe(true);
    quals.forEach((item, i) => {
      const input = item.querySelector<HTMLInputElement>(`input[name="qual${i}-fairness_average_american"][value="0"]`)!;
      input.checked = true;
      input.dispatchEvent(new Event("change"));
    });
    expect(submit.disabled).toBe(false);
    submit.click();
    await vi.waitFor(() => expect(root.querySelector(".block-screen")).toBeTruthy());
    expect(mock.qualificationSubmissions).toHaveLength(1);
    expect(mock.qualificationSubmissions[0]).toEqual(Array(10).fill(0));
  });
});

describe("campaign end", () => {
  it("shows the done screen when no blocks remain", async () => {
    const mock = new MockService({ blocksAvailable: 1 });
    const { root } = await startOnBlock(mock);
    fillEverything(root, ["fairness_average_american"]);
    submitButton(root).click();
    await vi.waitFor(() => expect(root.querySelector("#next-block")).toBeTruthy());
    root.querySelector<HTMLButtonElement>("#next-block")!.click();
    await vi.waitFor(() => expect(root.querySelector(".done-screen")).toBeTruthy());
  });
});
