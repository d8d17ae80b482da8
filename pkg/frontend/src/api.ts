/**
 * Thin typed client over the session REST API. fetch is injected so
 * tests can run without a network or a browser.
 */

import { ReportView, SessionView, validatePreferenceText } from "./model.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface SpecInfo {
  id: string;
  section: string;
  family: string;
  utterance: string;
}

export interface ApiError {
  code: number;
  message: string;
}

export type SubmitResult =
  | { kind: "ok"; session: SessionView }
  | { kind: "validation"; message: string }
  | { kind: "error"; error: ApiError };

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const body = await response.json();
    if (!response.ok) {
      throw Object.assign(new Error(body.message ?? `HTTP ${response.status}`), {
        api: { code: body.code ?? response.status, message: body.message ?? "" } as ApiError,
      });
    }
    return body as T;
  }

  getSpecs(): Promise<SpecInfo[]> {
    return this.request<SpecInfo[]>("/specs");
  }

  getSession(id: string): Promise<SessionView> {
    return this.request<SessionView>(`/sessions/${id}`);
  }

  getReport(id: string): Promise<ReportView> {
    return this.request<ReportView>(`/reports/${id}`);
  }

  createSession(specId: string, method: string, seed: number): Promise<SessionView> {
    return this.request<SessionView>("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ spec_id: specId, method, seed }),
    });
  }

  /**
   * Submit the user's preference. Empty text is rejected locally and
   * never produces a request; server conflicts surface as typed errors
   * so the caller can show a banner without changing its state.
   */
  async submitPreference(id: string, text: string, token?: string): Promise<SubmitResult> {
    const validation = validatePreferenceText(text);
    if (!validation.ok) {
      return { kind: "validation", message: validation.message ?? "invalid input" };
    }
    try {
      const session = await this.request<SessionView>(`/sessions/${id}/answer`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ preference_text: text, token }),
      });
      return { kind: "ok", session };
    } catch (err) {
      const api = (err as { api?: ApiError }).api;
      if (api) {
        return { kind: "error", error: api };
      }
      throw err;
    }
  }
}
