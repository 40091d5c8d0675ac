/** Console wiring: queue cards, keyboard shortcuts, session trigger, charts. */

import { ApiClient, ApiError } from "./api.js";
import { Metric, renderHistogram, renderHistoryChart } from "./chart.js";
import { Card, QueueModel } from "./queue.js";

const api = new ApiClient("");
const queue = new QueueModel(api);

const el = (id: string) => document.getElementById(id)!;

function banner(message: string, kind: "error" | "info" = "error"): void {
  const box = el("banner");
  box.textContent = message;
  box.className = message ? `banner ${kind}` : "banner hidden";
  if (!message) box.classList.add("hidden");
}

async function refreshStatus(): Promise<void> {
  const s = await api.status();
  el("status").textContent =
    `session ${s.session_index} · method ${s.method} · replay ${s.replay_size} · ` +
    `ledger ${s.ledger_size} · ${s.pending_items} pending`;
}

function cardHtml(card: Card): string {
  const tone = card.item.verdict === "id" ? "tag-id" : "tag-ood";
  const failed = card.state === "failed"
    ? `<div class="card-error">submit failed: ${card.error ?? "unknown"} (press a/r to retry)</div>`
    : "";
  return `
    <div class="card" data-item="${card.item.item_id}">
      <div class="card-head">
        <span class="tag ${tone}">${card.item.verdict}</span>
        <span class="score">score ${card.item.score.toFixed(3)}</span>
      </div>
      <div class="card-body">image ${card.item.image_id} ·
        bbox [${card.item.bbox.map((b) => b.toFixed(0)).join(", ")}]</div>
      <div class="card-actions">
        <button class="accept">accept (a)</button>
        <button class="reject">reject (r)</button>
      </div>
      ${failed}
    </div>`;
}

function renderQueue(): void {
  const box = el("queue");
  const open = queue.pending();
  if (!open.length) {
    box.innerHTML = `<div class="empty">All caught up — trigger the next
      training session when ready.</div>`;
    return;
  }
  box.innerHTML = open.map(cardHtml).join("");
  for (const card of Array.from(box.querySelectorAll<HTMLElement>(".card"))) {
    const id = Number(card.dataset.item);
    card.querySelector(".accept")!.addEventListener("click", () => answer(id, "accept"));
    card.querySelector(".reject")!.addEventListener("click", () => answer(id, "reject"));
  }
}

async function answer(itemId: number, verdict: "accept" | "reject"): Promise<void> {
  const state = await queue.submit(itemId, verdict);
  if (state === "failed") {
    banner("Could not reach the server — the card stays in the queue.");
  } else {
    banner("");
  }
  renderQueue();
  await refreshStatus().catch(() => undefined);
  if (queue.drained()) {
    await queue.load().catch(() => undefined);   // server may have staged more
    renderQueue();
  }
}

async function refreshCharts(): Promise<void> {
  const { rows } = await api.history();
  const metric = (el("metric") as HTMLSelectElement).value as Metric;
  renderHistoryChart(el("history-chart") as HTMLCanvasElement, rows, "holdout", metric);
  renderHistoryChart(el("seen-chart") as HTMLCanvasElement, rows, "seen", metric);
  const table = rows
    .filter((r) => r.group === "holdout")
    .map((r) => `<tr><td>${r.session}</td><td>${r.method}</td>` +
      `<td>${r.fpr95.toFixed(4)}</td><td>${r.auroc.toFixed(4)}</td></tr>`)
    .join("");
  el("history-table").innerHTML =
    `<tr><th>session</th><th>method</th><th>FPR@95</th><th>AUROC</th></tr>${table}`;
  const hist = await api.histogram("holdout");
  renderHistogram(el("histogram") as HTMLCanvasElement, hist);
}

async function triggerSession(): Promise<void> {
  const button = el("train") as HTMLButtonElement;
  button.disabled = true;
  banner("Training session running…", "info");
  try {
    const reply = await api.train();
    banner(`Session ${reply.session_index} finished.`, "info");
    await queue.load();
    renderQueue();
    await Promise.all([refreshStatus(), refreshCharts()]);
  } catch (err) {
    if (err instanceof ApiError && err.status === 409) {
      banner("A session is already running — try again shortly.");
    } else {
      banner(`Training failed: ${err instanceof Error ? err.message : err}`);
    }
  } finally {
    button.disabled = false;
  }
}

function bindKeys(): void {
  document.addEventListener("keydown", (ev) => {
    if (ev.key !== "a" && ev.key !== "r") return;
    const card = queue.next();
    if (!card) return;
    void answer(card.item.item_id, ev.key === "a" ? "accept" : "reject");
  });
}

async function boot(): Promise<void> {
  bindKeys();
  el("train").addEventListener("click", () => void triggerSession());
  el("metric").addEventListener("change", () => void refreshCharts());
  el("reload").addEventListener("click", () => void boot());
  try {
    await queue.load();
    renderQueue();
    await Promise.all([refreshStatus(), refreshCharts()]);
    banner("");
  } catch (err) {
    banner(`Could not reach the gateway: ${err instanceof Error ? err.message : err}`);
  }
}

void boot();
