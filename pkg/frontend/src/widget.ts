/**
 * Embeddable related-articles widget.
 *
 * Fetches the XML recommendation set for one document and renders a heading
 * plus an ordered list into a host element. Entries link through click_url
 * (the service-side redirect that logs the click), never fallback_url.
 *
 * Two ways in:
 *   - programmatic: `mount({ apiBaseUrl, documentId, container, maxItems })`
 *   - script tag:   `<script src=".../widget.js" data-api-base-url="..."
 *                     data-document-id="..." data-container="#related"></script>`
 *
 * Nothing in here may throw into the host page: every failure path logs a
 * console diagnostic and renders nothing.
 */

export interface WidgetConfig {
  /** Absolute base URL of the recommendation service. */
  apiBaseUrl: string;
  /** The partner's own id for the document being viewed. */
  documentId: string;
  /** CSS selector of the element the list is rendered into. */
  container: string;
  /** Upper bound on rendered entries; must be >= 1. */
  maxItems: number;
  /** Partner credential, sent as X-Api-Key when present. */
  apiKey?: string;
}

interface Entry {
  rank: number;
  clickUrl: string;
  snippetHtml: string;
}

interface ParsedResponse {
  label: string;
  entries: Entry[];
}

const LOG_PREFIX = "[relart-widget]";

/**
 * The five span classes the service emits in snippets (title is the only
 * one carrying the mdl- prefix). Anything else in a snippet is markup we
 * did not produce and gets stripped.
 */
const SNIPPET_SPAN_CLASSES = new Set([
  "mdl-title",
  "authors",
  "journal",
  "volume_and_number",
  "year",
]);

/** Elements whose content is code/markup rather than text: drop entirely. */
const DROP_WITH_CONTENT = new Set(["script", "style", "template", "iframe", "object", "embed"]);

function diag(message: string, detail?: unknown): void {
  if (detail === undefined) {
    console.error(`${LOG_PREFIX} ${message}`);
  } else {
    console.error(`${LOG_PREFIX} ${message}`, detail);
  }
}

function validateConfig(config: WidgetConfig): string | null {
  let parsed: URL;
  try {
    parsed = new URL(config.apiBaseUrl);
  } catch {
    return `apiBaseUrl must be absolute, got "${config.apiBaseUrl}"`;
  }
  if (parsed.protocol !== "http:" && parsed.protocol !== "https:") {
    return `apiBaseUrl must be http(s), got "${config.apiBaseUrl}"`;
  }
  if (!config.documentId) {
    return "documentId is required";
  }
  if (!Number.isInteger(config.maxItems) || config.maxItems < 1) {
    return `maxItems must be a positive integer, got ${config.maxItems}`;
  }
  return null;
}

function requestUrl(config: WidgetConfig): string {
  const base = config.apiBaseUrl.replace(/\/+$/, "");
  return `${base}/v1/documents/${encodeURIComponent(config.documentId)}/related_documents`;
}

function childText(parent: Element, tag: string): string | null {
  for (const child of Array.from(parent.children)) {
    if (child.tagName === tag) {
      return child.textContent ?? "";
    }
  }
  return null;
}

/**
 * Parse the wire XML. Returns null when the payload is not a well-formed
 * related_articles document; individual entries missing a usable rank or
 * click_url are skipped rather than failing the whole set.
 */
export function parseResponse(xmlText: string): ParsedResponse | null {
  let doc: Document;
  try {
    doc = new DOMParser().parseFromString(xmlText, "text/xml");
  } catch {
    return null;
  }
  if (doc.getElementsByTagName("parsererror").length > 0) {
    return null;
  }
  const root = doc.documentElement;
  if (!root || root.tagName !== "related_articles") {
    return null;
  }
  const label = root.getAttribute("suggested_label") ?? "Related Articles";
  const entries: Entry[] = [];
  for (const item of Array.from(root.children)) {
    if (item.tagName !== "related_article") {
      continue;
    }
    const rank = Number(childText(item, "suggested_rank"));
    const clickUrl = childText(item, "click_url");
    if (!Number.isFinite(rank) || !clickUrl) {
      continue;
    }
    entries.push({ rank, clickUrl, snippetHtml: childText(item, "snippet") ?? "" });
  }
  return { label, entries };
}

/**
 * Reduce snippet HTML to text plus the five known span classes.
 *
 * Unknown tags are stripped but their text survives; script-like elements
 * are dropped content and all. Surviving spans are rebuilt from scratch so
 * no attribute other than the whitelisted class ever reaches the page.
 */
export function sanitizeSnippet(html: string): DocumentFragment {
  const template = document.createElement("template");
  template.innerHTML = html;
  const out = document.createDocumentFragment();
  appendSanitized(template.content, out);
  return out;
}

function appendSanitized(source: Node, target: Node): void {
  for (const node of Array.from(source.childNodes)) {
    if (node.nodeType === Node.TEXT_NODE) {
      target.appendChild(document.createTextNode(node.textContent ?? ""));
      continue;
    }
    if (node.nodeType !== Node.ELEMENT_NODE) {
      continue;
    }
    const el = node as Element;
    const tag = el.tagName.toLowerCase();
    if (DROP_WITH_CONTENT.has(tag)) {
      continue;
    }
    const cls = el.getAttribute("class") ?? "";
    if (tag === "span" && SNIPPET_SPAN_CLASSES.has(cls)) {
      const span = document.createElement("span");
      span.className = cls;
      span.textContent = el.textContent ?? "";
      target.appendChild(span);
    } else {
      appendSanitized(el, target);
    }
  }
}

function render(container: Element, label: string, entries: Entry[], maxItems: number): void {
  const heading = document.createElement("h3");
  heading.className = "relart-heading";
  heading.textContent = label;

  // Stable sort by rank, then cap; the wire order is not trusted.
  const shown = entries
    .slice()
    .sort((a, b) => a.rank - b.rank)
    .slice(0, maxItems);

  if (shown.length === 0) {
    const empty = document.createElement("p");
    empty.className = "relart-empty";
    empty.textContent = "no recommendations";
    container.replaceChildren(heading, empty);
    return;
  }

  const list = document.createElement("ol");
  list.className = "relart-list";
  for (const entry of shown) {
    const item = document.createElement("li");
    item.className = "relart-item";
    const anchor = document.createElement("a");
    anchor.href = entry.clickUrl;
    anchor.appendChild(sanitizeSnippet(entry.snippetHtml));
    item.appendChild(anchor);
    list.appendChild(item);
  }
  container.replaceChildren(heading, list);
}

/**
 * Fetch and render. Resolves once rendering (or the decision not to
 * render) is done; never rejects.
 */
export async function mount(config: WidgetConfig): Promise<void> {
  const problem = validateConfig(config);
  if (problem !== null) {
    diag(problem);
    return;
  }
  const container = document.querySelector(config.container);
  if (container === null) {
    diag(`container "${config.container}" not found`);
    return;
  }

  let body: string;
  try {
    const headers: Record<string, string> = {};
    if (config.apiKey) {
      headers["X-Api-Key"] = config.apiKey;
    }
    const response = await fetch(requestUrl(config), { headers });
    if (!response.ok) {
      diag(`request failed with status ${response.status}`);
      return;
    }
    body = await response.text();
  } catch (err) {
    diag("request failed", err);
    return;
  }

  const parsed = parseResponse(body);
  if (parsed === null) {
    diag("response was not a well-formed related_articles document");
    return;
  }
  render(container, parsed.label, parsed.entries, config.maxItems);
}

/**
 * Script-tag entry point: read WidgetConfig from data attributes
 * (data-api-base-url, data-document-id, data-container, data-max-items,
 * data-api-key) and mount once the DOM is ready.
 */
export function autoMountFromScript(script: HTMLScriptElement): Promise<void> {
  const { apiBaseUrl, documentId, container, maxItems, apiKey } = script.dataset;
  if (!apiBaseUrl || !documentId || !container) {
    diag("script tag needs data-api-base-url, data-document-id and data-container");
    return Promise.resolve();
  }
  const config: WidgetConfig = {
    apiBaseUrl,
    documentId,
    container,
    maxItems: maxItems === undefined ? 10 : Number(maxItems),
    apiKey,
  };
  if (document.readyState === "loading") {
    return new Promise((resolve) => {
      document.addEventListener("DOMContentLoaded", () => {
        mount(config).then(resolve);
      });
    });
  }
  return mount(config);
}

if (typeof document !== "undefined" && document.currentScript instanceof HTMLScriptElement) {
  const script = document.currentScript;
  if (script.dataset.documentId !== undefined) {
    void autoMountFromScript(script);
  }
}
