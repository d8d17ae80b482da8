/**
 * Browser glue: binds the API client, poller, and renderers to the
 * static page. All logic worth testing lives in model/render/api/poller.
 */
import { ApiClient } from "./api.js";
import { TERMINAL_STATES, validatePreferenceText } from "./model.js";
import { SessionPoller } from "./poller.js";
import { renderError, renderHypotheses, renderReport, renderScenePair, renderStateBadge, } from "./render.js";
const client = new ApiClient("", (url, init) => fetch(url, init));
function el(id) {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node;
}
let currentSession = null;
let poller = null;
function renderSession(session) {
    currentSession = session;
    el("state").innerHTML = renderStateBadge(session);
    el("session-id").textContent = session.id;
    const pendingPanel = el("pending");
    const answerForm = el("answer-form");
    if (session.state === "awaiting_human" && session.pending) {
        pendingPanel.innerHTML =
            renderScenePair(session.pending) + renderHypotheses(session.pending);
        answerForm.hidden = false;
    }
    else {
        answerForm.hidden = true;
        if (session.pending === null) {
            pendingPanel.innerHTML = "";
        }
    }
    el("report").innerHTML =
        session.state === "done" || session.report
            ? renderReport(session.report)
            : session.state === "failed"
                ? renderError(session.error ?? "run failed")
                : renderReport(null);
}
function startPolling(sessionId) {
    poller?.stop();
    poller = new SessionPoller(async () => {
        const session = await client.getSession(sessionId);
        renderSession(session);
        return !TERMINAL_STATES.includes(session.state);
    });
    poller.start();
}
async function boot() {
    const specSelect = el("spec");
    const specs = await client.getSpecs();
    specSelect.innerHTML = specs
        .map((s) => `<option value="${s.id}">${s.id} — ${s.utterance}</option>`)
        .join("");
    el("create-form").addEventListener("submit", async (event) => {
        event.preventDefault();
        const method = el("method").value;
        const seed = parseInt(el("seed").value || "0", 10);
        const session = await client.createSession(specSelect.value, method, seed);
        el("banner").innerHTML = "";
        renderSession(session);
        startPolling(session.id);
    });
    const textarea = el("preference-text");
    const submit = el("submit-answer");
    const inline = el("inline-validation");
    textarea.addEventListener("input", () => {
        const validation = validatePreferenceText(textarea.value);
        submit.disabled = !validation.ok;
        inline.textContent = validation.ok ? "" : (validation.message ?? "");
    });
    submit.disabled = true;
    el("answer-form").addEventListener("submit", async (event) => {
        event.preventDefault();
        if (!currentSession) {
            return;
        }
        const result = await client.submitPreference(currentSession.id, textarea.value, `ui-${currentSession.id}`);
        if (result.kind === "validation") {
            inline.textContent = result.message;
            return; // no request was made
        }
        if (result.kind === "error") {
            el("banner").innerHTML = renderError(`${result.error.code}: ${result.error.message}`);
            return; // state unchanged
        }
        el("banner").innerHTML = "";
        textarea.value = "";
        submit.disabled = true;
        renderSession(result.session);
    });
}
void boot();
