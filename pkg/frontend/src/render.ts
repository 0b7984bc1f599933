// DOM rendering.  Views are re-rendered from the view-model on every change;
// pair order inside a block is displayed exactly as served (attention-check
// placement is the server's business).

import { substituteGroups } from "./battery";
import type { Battery, Question } from "./battery";
import type { QualificationItemView } from "./api";
import { BlockSession } from "./state";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

export function renderConsent(
  root: HTMLElement,
  notices: Record<string, string>,
  onContinue: () => void,
): void {
  root.replaceChildren();
  const screen = el("div", "consent-screen");
  screen.appendChild(el("h1", undefined, "Before you start"));
  if (notices.warning) {
    screen.appendChild(el("p", "warning-notice", notices.warning));
  }
  if (notices.withdrawal) {
    screen.appendChild(el("p", "withdrawal-notice", notices.withdrawal));
  }
  const button = el("button", undefined, "I understand, continue");
  button.id = "consent-continue";
  button.addEventListener("click", onContinue);
  screen.appendChild(button);
  root.appendChild(screen);
}

function renderQuestion(
  container: HTMLElement,
  question: Question,
  groupA: string,
  groupB: string,
  namePrefix: string,
  selected: number | undefined,
  onSelect: (choice: number) => void,
): void {
  const box = el("fieldset", `question question-${question.key}`);
  box.appendChild(el("legend", "question-text", substituteGroups(question.text, groupA, groupB)));
  question.options.forEach((option, index) => {
    const label = el("label", "question-option");
    const input = el("input");
    input.type = "radio";
    input.name = `${namePrefix}-${question.key}`;
    input.value = String(index);
    input.checked = selected === index;
    input.addEventListener("change", () => onSelect(index));
    label.appendChild(input);
    label.appendChild(el("span", "option-text", substituteGroups(option, groupA, groupB)));
    box.appendChild(label);
  });
  container.appendChild(box);
}

export function renderQualification(
  root: HTMLElement,
  items: QualificationItemView[],
  battery: Battery,
  onSubmit: (answers: number[]) => void,
): void {
  root.replaceChildren();
  const screen = el("div", "qualification-screen");
  screen.appendChild(el("h1", undefined, "Qualification test"));
  const answers: Array<number | undefined> = items.map(() => undefined);
  const question = battery.questions.find((q) => q.role === "fairness") ?? battery.questions[0];
  const button = el("button", undefined, "Submit qualification");
  button.id = "submit-qualification";
  button.disabled = true;
  items.forEach((item, i) => {
    const box = el("div", "qual-item");
    box.appendChild(el("p", "comment-a", `a) ${item.a}`));
    box.appendChild(el("p", "comment-b", `b) ${item.b}`));
    renderQuestion(box, question, "", "", `qual${i}`, answers[i], (choice) => {
      answers[i] = choice;
      button.disabled = answers.some((a) => a === undefined);
    });
    screen.appendChild(box);
  });
  button.addEventListener("click", () => onSubmit(answers.map((a) => a ?? 0)));
  screen.appendChild(button);
  root.appendChild(screen);
}

export interface BlockHandlers {
  onChange: () => void;
  onSubmit: () => void;
  onNext: () => void;
}

export function renderBlock(root: HTMLElement, session: BlockSession, handlers: BlockHandlers): void {
  root.replaceChildren();
  const screen = el("div", "block-screen");
  const progress = el("p", "progress");
  const updateProgress = () => {
    progress.textContent = `${session.answeredCount()} of ${session.block.items.length} items answered`;
  };
  updateProgress();
  screen.appendChild(progress);

  const submit = el("button", undefined, "Submit block");
  submit.id = "submit-block";
  const syncSubmit = () => {
    submit.disabled = session.status === "editing" ? !session.isComplete() : session.status !== "failed";
  };

  session.block.items.forEach((item) => {
    const box = el("div", "block-item");
    box.appendChild(el("h2", undefined, `Item ${item.index + 1}`));
    box.appendChild(el("p", "comment-a", `a) ${item.a}`));
    box.appendChild(el("p", "comment-b", `b) ${item.b}`));
    for (const question of session.battery.questions) {
      renderQuestion(
        box,
        question,
        item.group_a,
        item.group_b,
        `item${item.index}`,
        session.getAnswer(item.index, question.key),
        (choice) => {
          session.setAnswer(item.index, question.key, choice);
          updateProgress();
          syncSubmit();
          handlers.onChange();
        },
      );
    }
    if (item.index === session.block.explanation_index) {
      const wrap = el("div", "explanation");
      wrap.appendChild(el("p", undefined, "Please explain your answer for this item (required):"));
      const area = el("textarea");
      area.id = "explanation-input";
      area.value = session.explanation;
      area.addEventListener("input", () => {
        session.setExplanation(area.value);
        syncSubmit();
        handlers.onChange();
      });
      wrap.appendChild(area);
      box.appendChild(wrap);
    }
    screen.appendChild(box);
  });

  syncSubmit();
  submit.addEventListener("click", handlers.onSubmit);
  screen.appendChild(submit);

  if (session.status === "failed") {
    const retry = el("p", "retry-notice", "Submission failed. Your answers are unchanged; press Submit block to retry.");
    screen.appendChild(retry);
  }
  if (session.status === "done" && session.outcome) {
    const notice = el("div", `outcome-notice outcome-${session.outcome}`);
    notice.appendChild(
      el(
        "p",
        undefined,
        session.outcome === "accepted"
          ? "Block accepted. Thank you!"
          : "Block flagged for review.",
      ),
    );
    if (session.outcome === "flagged") {
      notice.appendChild(
        el("p", "review-notice", "A reviewer will look at this block before any of its answers count."),
      );
    }
    const next = el("button", undefined, "Next block");
    next.id = "next-block";
    next.addEventListener("click", handlers.onNext);
    notice.appendChild(next);
    screen.appendChild(notice);
  }
  root.appendChild(screen);
}

export function renderSessionExpired(root: HTMLElement, onReauth: (token: string) => void): void {
  // rendered as an overlay so the block view (and entered answers) stay put
  const overlay = el("div", "session-expired");
  overlay.appendChild(el("p", undefined, "Your session expired. Re-enter your access token to continue; your answers are preserved."));
  const input = el("input");
  input.id = "reauth-token";
  input.type = "password";
  const button = el("button", undefined, "Re-authenticate");
  button.id = "reauth-continue";
  button.addEventListener("click", () => {
    overlay.remove();
    onReauth(input.value);
  });
  overlay.appendChild(input);
  overlay.appendChild(button);
  root.appendChild(overlay);
}

export function renderTerminal(root: HTMLElement, className: string, message: string): void {
  root.replaceChildren();
  root.appendChild(el("div", className, message));
}
