// DOM wiring for the counting client.  All state lives in a QuerySession
// (src/session.ts); every render pass redraws from that data, and the
// network is injectable so tests can stub it.

import {
  ApiError,
  dataUrlToBase64,
  submitCount,
  type CountOptions,
  type FetchLike,
} from './api.js';
import {
  addRun,
  canCompare,
  createSession,
  dedupeSelection,
  exportSession,
  getRun,
  type QuerySession,
} from './session.js';

export interface AppOptions {
  baseUrl?: string;
  fetchFn?: FetchLike;
  now?: () => number;
  countOptions?: CountOptions;
}

const TEMPLATE = `
  <h1>Count anything you can describe</h1>
  <div class="banner hidden" data-ref="banner"></div>
  <section class="setup">
    <label class="file-label">
      Image
      <input type="file" accept="image/png,image/jpeg" data-ref="file">
    </label>
    <img class="preview hidden" alt="selected image" data-ref="preview">
    <form data-ref="form">
      <input type="text" data-ref="prompt"
             placeholder="what object should be counted?">
      <button type="submit" data-ref="submit" disabled>Count</button>
    </form>
  </section>
  <section class="runs" data-ref="runs"></section>
  <section class="toolbar">
    <button data-ref="compare" disabled>Compare selected</button>
    <label>overlay opacity
      <input type="range" min="0" max="100" value="60" data-ref="opacity">
    </label>
    <button data-ref="export" disabled>Export session</button>
  </section>
  <section class="compare-grid" data-ref="grid"></section>
`;

export class CountingApp {
  session: QuerySession | null = null;
  pending = false;
  selection: number[] = [];

  private readonly baseUrl: string;
  private readonly fetchFn: FetchLike;
  private readonly now: () => number;
  private readonly countOptions: CountOptions;
  private lastSubmission: Promise<void> = Promise.resolve();

  readonly banner: HTMLDivElement;
  readonly fileInput: HTMLInputElement;
  readonly preview: HTMLImageElement;
  readonly promptInput: HTMLInputElement;
  readonly submitButton: HTMLButtonElement;
  readonly runsPane: HTMLElement;
  readonly compareButton: HTMLButtonElement;
  readonly opacitySlider: HTMLInputElement;
  readonly exportButton: HTMLButtonElement;
  readonly compareGrid: HTMLElement;

  constructor(root: HTMLElement, options: AppOptions = {}) {
    this.baseUrl = options.baseUrl ?? '';
    this.fetchFn = options.fetchFn ?? ((input, init) => fetch(input, init));
    this.now = options.now ?? (() => Date.now());
    this.countOptions = options.countOptions ?? {};

    root.innerHTML = TEMPLATE;
    const ref = <T extends HTMLElement>(name: string): T => {
      const el = root.querySelector(`[data-ref="${name}"]`);
      if (!el) throw new Error(`missing element ${name}`);
      return el as T;
    };
    this.banner = ref('banner');
    this.fileInput = ref('file');
    this.preview = ref('preview');
    this.promptInput = ref('prompt');
    this.submitButton = ref('submit');
    this.runsPane = ref('runs');
    this.compareButton = ref('compare');
    this.opacitySlider = ref('opacity');
    this.exportButton = ref('export');
    this.compareGrid = ref('grid');

    this.fileInput.addEventListener('change', () => this.onFileChosen());
    this.promptInput.addEventListener('input', () => this.updateControls());
    ref<HTMLFormElement>('form').addEventListener('submit', (event) => {
      event.preventDefault();
      this.lastSubmission = this.submitPrompt();
    });
    this.compareButton.addEventListener('click', () => this.renderCompare());
    this.opacitySlider.addEventListener('input', () => this.applyOpacity());
    this.exportButton.addEventListener('click', () => this.downloadSession());
  }

  /** Await the most recent submission (used by tests and the UI idle hook). */
  whenIdle(): Promise<void> {
    return this.lastSubmission;
  }

  /** Start a fresh session around one image; prior runs belong to the
   * prior image and are discarded with it. */
  setImage(name: string, dataUrl: string): void {
    this.session = createSession(name, dataUrl);
    this.selection = [];
    this.preview.src = dataUrl;
    this.preview.classList.remove('hidden');
    this.hideBanner();
    this.renderRuns();
    this.renderCompare();
    this.updateControls();
  }

  private onFileChosen(): void {
    const file = this.fileInput.files?.[0];
    if (!file) return;
    const reader = new FileReader();
    reader.onload = () => this.setImage(file.name, String(reader.result));
    reader.readAsDataURL(file);
  }

  async submitPrompt(): Promise<void> {
    const prompt = this.promptInput.value.trim();
    if (!this.session || !prompt || this.pending) return;
    this.pending = true;
    this.updateControls();
    const started = this.now();
    try {
      const response = await submitCount(
        this.fetchFn,
        this.baseUrl,
        dataUrlToBase64(this.session.imageDataUrl),
        prompt,
        this.countOptions,
      );
      this.session = addRun(this.session, {
        prompt,
        count: response.count,
        overlayDataUrl: response.overlay
          ? `data:image/png;base64,${response.overlay}`
          : null,
        timestamp: started,
        latencyMs: this.now() - started,
      });
      this.hideBanner();
      this.promptInput.value = '';
      this.renderRuns();
    } catch (err) {
      // the session is left untouched; only the banner changes
      this.showBanner(
        err instanceof ApiError
          ? `${err.code}: ${err.message}`
          : 'cannot reach the counting service',
      );
    } finally {
      this.pending = false;
      this.updateControls();
    }
  }

  private updateControls(): void {
    const havePrompt = this.promptInput.value.trim().length > 0;
    this.submitButton.disabled = this.pending || !this.session || !havePrompt;
    this.compareButton.disabled =
      !this.session || !canCompare(this.session, this.selection);
    this.exportButton.disabled = !this.session;
  }

  private renderRuns(): void {
    this.runsPane.replaceChildren();
    if (!this.session) return;
    for (const run of this.session.runs) {
      const card = document.createElement('article');
      card.className = 'run-card';
      card.dataset.runId = String(run.id);

      const pick = document.createElement('input');
      pick.type = 'checkbox';
      pick.className = 'pick';
      pick.checked = this.selection.includes(run.id);
      pick.addEventListener('change', () => {
        this.selection = pick.checked
          ? [...this.selection, run.id]
          : this.selection.filter((id) => id !== run.id);
        this.updateControls();
      });
      card.appendChild(pick);

      const title = document.createElement('h3');
      title.textContent = run.prompt;
      card.appendChild(title);

      const count = document.createElement('p');
      count.className = 'count';
      count.textContent = String(run.roundedCount);
      card.appendChild(count);

      const detail = document.createElement('p');
      detail.className = 'detail';
      detail.textContent = `raw ${run.count.toFixed(2)} in ${run.latencyMs} ms`;
      card.appendChild(detail);

      card.appendChild(this.buildPane(run.overlayDataUrl));
      this.runsPane.appendChild(card);
    }
    this.applyOpacity();
  }

  /** Raw image with the overlay PNG layered on top at slider opacity. */
  private buildPane(overlayDataUrl: string | null): HTMLElement {
    const pane = document.createElement('div');
    pane.className = 'pane';
    const base = document.createElement('img');
    base.className = 'base';
    base.src = this.session ? this.session.imageDataUrl : '';
    pane.appendChild(base);
    if (overlayDataUrl) {
      const overlay = document.createElement('img');
      overlay.className = 'overlay';
      overlay.src = overlayDataUrl;
      pane.appendChild(overlay);
    }
    return pane;
  }

  renderCompare(): void {
    this.compareGrid.replaceChildren();
    if (!this.session) return;
    const ids = dedupeSelection(this.session, this.selection);
    if (ids.length < 2) return;
    for (const id of ids) {
      const run = getRun(this.session, id);
      if (!run) continue;
      const cell = document.createElement('figure');
      cell.className = 'compare-cell';
      cell.appendChild(this.buildPane(run.overlayDataUrl));
      const caption = document.createElement('figcaption');
      caption.textContent = `${run.prompt} — ${run.roundedCount}`;
      cell.appendChild(caption);
      this.compareGrid.appendChild(cell);
    }
    this.applyOpacity();
  }

  private applyOpacity(): void {
    const opacity = Number(this.opacitySlider.value) / 100;
    const overlays = document.querySelectorAll<HTMLImageElement>('img.overlay');
    overlays.forEach((img) => {
      img.style.opacity = String(opacity);
    });
  }

  private showBanner(message: string): void {
    this.banner.textContent = message;
    this.banner.classList.remove('hidden');
  }

  private hideBanner(): void {
    this.banner.textContent = '';
    this.banner.classList.add('hidden');
  }

  private downloadSession(): void {
    if (!this.session) return;
    const blob = new Blob([exportSession(this.session)], {
      type: 'application/json',
    });
    const anchor = document.createElement('a');
    anchor.href = URL.createObjectURL(blob);
    anchor.download = `${this.session.imageName}.session.json`;
    anchor.click();
    URL.revokeObjectURL(anchor.href);
  }
}

export function mountApp(root: HTMLElement, options: AppOptions = {}): CountingApp {
  return new CountingApp(root, options);
}

// Auto-mount when loaded as the page's module script.
if (typeof document !== 'undefined') {
  const root = document.getElementById('app');
  if (root) mountApp(root);
}
