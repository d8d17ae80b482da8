/**
 * Thin typed client over the session REST API. fetch is injected so
 * tests can run without a network or a browser.
 */
import { validatePreferenceText } from "./model.js";
export class ApiClient {
    constructor(baseUrl, fetchImpl) {
        this.baseUrl = baseUrl;
        this.fetchImpl = fetchImpl;
    }
    async request(path, init) {
        const response = await this.fetchImpl(this.baseUrl + path, init);
        const body = await response.json();
        if (!response.ok) {
            throw Object.assign(new Error(body.message ?? `HTTP ${response.status}`), {
                api: { code: body.code ?? response.status, message: body.message ?? "" },
            });
        }
        return body;
    }
    getSpecs() {
        return this.request("/specs");
    }
    getSession(id) {
        return this.request(`/sessions/${id}`);
    }
    getReport(id) {
        return this.request(`/reports/${id}`);
    }
    createSession(specId, method, seed) {
        return this.request("/sessions", {
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
    async submitPreference(id, text, token) {
        const validation = validatePreferenceText(text);
        if (!validation.ok) {
            return { kind: "validation", message: validation.message ?? "invalid input" };
        }
        try {
            const session = await this.request(`/sessions/${id}/answer`, {
                method: "POST",
                headers: { "Content-Type": "application/json" },
                body: JSON.stringify({ preference_text: text, token }),
            });
            return { kind: "ok", session };
        }
        catch (err) {
            const api = err.api;
            if (api) {
                return { kind: "error", error: api };
            }
            throw err;
        }
    }
}
