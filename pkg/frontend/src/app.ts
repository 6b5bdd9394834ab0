/** Single-page layout with three panes: chat, documents, records.
 * All displayed facts come from API responses; the UI performs no
 * retrieval or inference of its own. */

import { ApiClient, ApiError, ChatSource, RecordRow } from "./api.js";

const DONT_KNOW_RE = /don'?t know|do not know|no relevant context/i;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class App {
  readonly root: HTMLElement;
  private readonly api: ApiClient;
  private sessionId?: string;
  private pending = false;
  /** last CSV payload fetched by the download button (also used by tests) */
  lastCsv = "";

  // chat pane
  private messages!: HTMLElement;
  private questionInput!: HTMLInputElement;
  private sendButton!: HTMLButtonElement;
  private sourcePanel!: HTMLElement;
  // documents pane
  private fileInput!: HTMLInputElement;
  private toast!: HTMLElement;
  private documentList!: HTMLElement;
  // records pane
  private filterInput!: HTMLInputElement;
  private recordsTable!: HTMLTableElement;
  private recordsEmpty!: HTMLElement;
  private rows: RecordRow[] = [];

  constructor(root: HTMLElement, api: ApiClient) {
    this.root = root;
    this.api = api;
    this.render();
  }

  private render(): void {
    this.root.innerHTML = "";
    this.root.append(this.chatPane(), this.documentsPane(), this.recordsPane());
  }

  // -- chat ---------------------------------------------------------------

  private chatPane(): HTMLElement {
    const pane = el("section", "pane chat-pane");
    pane.append(el("h2", undefined, "Chat"));
    this.messages = el("div", "messages");
    this.sourcePanel = el("div", "source-panel");
    this.sourcePanel.hidden = true;

    const form = el("form", "chat-form");
    this.questionInput = el("input", "question-input");
    this.questionInput.placeholder = "Ask about the corpus…";
    this.sendButton = el("button", "send-button", "Send");
    this.sendButton.type = "submit";
    this.sendButton.disabled = true;
    this.questionInput.addEventListener("input", () => this.updateSendState());
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.send();
    });
    form.append(this.questionInput, this.sendButton);
    pane.append(this.messages, this.sourcePanel, form);
    return pane;
  }

  private updateSendState(): void {
    this.sendButton.disabled = this.pending || this.questionInput.value.trim() === "";
  }

  async send(): Promise<void> {
    const question = this.questionInput.value.trim();
    if (question === "" || this.pending) return;
    this.pending = true;
    this.updateSendState();
    this.appendMessage("user", question);
    try {
      const reply = await this.api.chat(question, this.sessionId);
      this.sessionId = reply.session_id;
      const bubble = this.appendMessage("assistant", reply.answer);
      const dontKnow = reply.citations.length === 0 && DONT_KNOW_RE.test(reply.answer);
      if (dontKnow) bubble.classList.add("dont-know");
      this.appendCitationChips(bubble, reply.citations, reply.sources);
      this.questionInput.value = "";
    } catch (error) {
      // leave the input untouched so the user can retry
      this.appendMessage("error", describeError(error));
    } finally {
      this.pending = false;
      this.updateSendState();
    }
  }

  private appendMessage(role: string, text: string): HTMLElement {
    const bubble = el("div", `message ${role}`);
    bubble.append(el("p", "message-text", text));
    this.messages.append(bubble);
    return bubble;
  }

  private appendCitationChips(
    bubble: HTMLElement,
    citations: string[],
    sources: ChatSource[],
  ): void {
    if (citations.length === 0) return;
    const strip = el("div", "citations");
    for (const tag of citations) {
      const source = sources.find((s) => s.tag === tag);
      const chip = el("button", "citation-chip", tag);
      chip.type = "button";
      if (source) {
        chip.dataset.chunkId = source.chunk_id;
        chip.addEventListener("click", () => void this.showSource(source));
      }
      strip.append(chip);
    }
    bubble.append(strip);
  }

  async showSource(source: ChatSource): Promise<void> {
    try {
      const text = await this.api.chunkText(source.chunk_id);
      this.sourcePanel.hidden = false;
      this.sourcePanel.innerHTML = "";
      this.sourcePanel.append(
        el("h3", undefined, `${source.tag} — ${source.doc_id}`),
        el("pre", "source-text", text),
      );
    } catch (error) {
      this.sourcePanel.hidden = false;
      this.sourcePanel.textContent = describeError(error);
    }
  }

  // -- documents ----------------------------------------------------------

  private documentsPane(): HTMLElement {
    const pane = el("section", "pane documents-pane");
    pane.append(el("h2", undefined, "Documents"));
    this.fileInput = el("input", "file-input");
    this.fileInput.type = "file";
    const upload = el("button", "upload-button", "Upload");
    upload.type = "button";
    upload.addEventListener("click", () => void this.upload());
    this.toast = el("div", "toast");
    this.toast.hidden = true;
    this.documentList = el("ul", "document-list");
    pane.append(this.fileInput, upload, this.toast, this.documentList);
    return pane;
  }

  async upload(): Promise<void> {
    const file = this.fileInput.files?.[0];
    if (!file) return;
    try {
      const report = await this.api.uploadDocument(file);
      this.showToast(
        report.skipped
          ? "already ingested"
          : `${report.chunks} chunks, ${report.vectors} vectors`,
        false,
      );
      await this.refreshDocuments();
    } catch (error) {
      this.showToast(describeError(error), true);
    }
  }

  private showToast(text: string, isError: boolean): void {
    this.toast.hidden = false;
    this.toast.textContent = text;
    this.toast.classList.toggle("error", isError);
  }

  async refreshDocuments(): Promise<void> {
    const docs = await this.api.listDocuments();
    this.documentList.innerHTML = "";
    for (const doc of docs) {
      this.documentList.append(
        el("li", "document-item", `${doc.source_path} (${doc.chunks} chunks)`),
      );
    }
  }

  // -- records ------------------------------------------------------------

  private recordsPane(): HTMLElement {
    const pane = el("section", "pane records-pane");
    pane.append(el("h2", undefined, "Records"));
    this.filterInput = el("input", "filter-input");
    this.filterInput.placeholder = "Filter rows…";
    this.filterInput.addEventListener("input", () => this.renderRecords());
    const download = el("button", "download-button", "Download CSV");
    download.type = "button";
    download.addEventListener("click", () => void this.downloadCsv());
    this.recordsEmpty = el("div", "records-empty", "No records yet.");
    this.recordsTable = el("table", "records-table");
    this.recordsTable.hidden = true;
    pane.append(this.filterInput, download, this.recordsEmpty, this.recordsTable);
    return pane;
  }

  async refreshRecords(): Promise<void> {
    try {
      this.rows = await this.api.records();
    } catch {
      this.rows = [];
    }
    this.renderRecords();
  }

  private renderRecords(): void {
    const filter = this.filterInput.value.trim().toLowerCase();
    const keys = this.rows.length > 0 ? Object.keys(this.rows[0].values) : [];
    const visible = this.rows.filter((row) => {
      if (filter === "") return true;
      const haystack = [row.record_id, row.doc_id, ...keys.map((k) => row.values[k])];
      return haystack.some((v) => v.toLowerCase().includes(filter));
    });

    this.recordsTable.innerHTML = "";
    if (visible.length === 0) {
      this.recordsTable.hidden = true;
      this.recordsEmpty.hidden = false;
      return;
    }
    this.recordsTable.hidden = false;
    this.recordsEmpty.hidden = true;

    const head = el("tr");
    for (const column of ["record_id", "doc_id", ...keys]) {
      head.append(el("th", undefined, column));
    }
    this.recordsTable.append(head);
    for (const row of visible) {
      const tr = el("tr");
      tr.append(el("td", undefined, row.record_id), el("td", undefined, row.doc_id));
      for (const key of keys) {
        const value = row.values[key];
        const td = el("td", value === "N/A" ? "na-cell" : undefined, value);
        tr.append(td);
      }
      this.recordsTable.append(tr);
    }
  }

  async downloadCsv(): Promise<void> {
    this.lastCsv = await this.api.recordsCsv();
    if (typeof URL.createObjectURL !== "function") return; // test environment
    const url = URL.createObjectURL(new Blob([this.lastCsv], { type: "text/csv" }));
    const anchor = el("a");
    anchor.href = url;
    anchor.download = "records.csv";
    anchor.click();
    URL.revokeObjectURL(url);
  }
}

function describeError(error: unknown): string {
  if (error instanceof ApiError) return `${error.code}: ${error.message}`;
  return error instanceof Error ? error.message : String(error);
}

export function mount(root: HTMLElement, baseUrl = ""): App {
  const app = new App(root, new ApiClient(baseUrl));
  void app.refreshDocuments().catch(() => undefined);
  void app.refreshRecords();
  return app;
}
