/**
 * Browser bootstrap: session lifecycle, page rendering, event wiring.
 *
 * The session id lives in memory and in local storage (so an accidental
 * reload resumes mid-study); per-page checkbox and rating state persists
 * the same way until the page is submitted. The flow is strictly
 * forward, one page at a time.
 */

import { ApiClient } from './api.js';
import { Page } from './schema.js';
import {
    PageOneState,
    PageTwoState,
    buildPageOneSubmission,
    buildPageTwoSubmission,
    canSubmitPageOne,
    canSubmitPageTwo,
    clearPageState,
    clearSession,
    freshPageOne,
    freshPageTwo,
    loadPageState,
    loadSession,
    savePageState,
    saveSession,
} from './state.js';
import { renderCompletion, renderFatalError, renderPage } from './views.js';

export async function startSurvey(root: HTMLElement, client: ApiClient): Promise<void> {
    const store = window.localStorage;
    let participantId: string;
    let cursor: number;

    const stored = loadSession(store);
    if (stored) {
        ({ participantId, cursor } = stored);
    } else {
        const session = await client.createSession();
        participantId = session.participant_id;
        cursor = session.cursor;
        saveSession(store, { participantId, cursor });
    }

    const showPage = async (): Promise<void> => {
        let page: Page;
        try {
            page = await client.getPage(participantId, cursor);
        } catch (error) {
            const apiError = error as { code?: string; message?: string };
            if (apiError.code === 'session_completed') {
                root.innerHTML = renderCompletion();
                clearSession(store);
                return;
            }
            if (apiError.code === 'unknown_session') {
                // The server lost this never-submitted session (restart);
                // start a fresh one.
                clearSession(store);
                const session = await client.createSession();
                participantId = session.participant_id;
                cursor = session.cursor;
                saveSession(store, { participantId, cursor });
                return showPage();
            }
            root.innerHTML = renderFatalError(apiError.message ?? 'service unreachable');
            root.querySelector('[data-role="retry"]')?.addEventListener('click', () => {
                void showPage();
            });
            return;
        }

        const fallback =
            page.page === 1
                ? freshPageOne(page.features.length)
                : freshPageTwo(page.features.length);
        let state = loadPageState(store, participantId, cursor, fallback);
        const pageShownAt = performance.now();

        const rerender = (): void => {
            root.innerHTML = renderPage(page, state);
            wire();
        };

        const persist = (): void => {
            savePageState(store, participantId, cursor, state);
        };

        const wire = (): void => {
            root.querySelectorAll<HTMLInputElement>('[data-feature-index]').forEach((box) => {
                box.addEventListener('change', () => {
                    const index = Number(box.dataset.featureIndex);
                    state.selected[index] = box.checked;
                    persist();
                });
            });
            if (page.page === 1) {
                const confirm = root.querySelector<HTMLInputElement>('[data-role="confirm"]');
                confirm?.addEventListener('change', () => {
                    (state as PageOneState).confirmed = confirm.checked;
                    persist();
                    rerender();
                });
            } else {
                root.querySelectorAll<HTMLInputElement>('[data-rating]').forEach((radio) => {
                    radio.addEventListener('change', () => {
                        const name = radio.dataset.rating as
                            | 'completeness'
                            | 'understandability'
                            | 'verboseness';
                        (state as PageTwoState).ratings[name] = Number(radio.value);
                        persist();
                        rerender();
                    });
                });
                const freeText = root.querySelector<HTMLTextAreaElement>(
                    '[data-role="free-text"]',
                );
                freeText?.addEventListener('input', () => {
                    (state as PageTwoState).freeText = freeText.value;
                    persist();
                });
            }
            const submit = root.querySelector<HTMLButtonElement>('[data-role="submit"]');
            submit?.addEventListener('click', () => {
                void handleSubmit(submit);
            });
        };

        const handleSubmit = async (button: HTMLButtonElement): Promise<void> => {
            const ready =
                page.page === 1
                    ? canSubmitPageOne(state as PageOneState)
                    : canSubmitPageTwo(state as PageTwoState);
            if (!ready || button.disabled) return;
            button.disabled = true; // client-side duplicate prevention
            const dwellSeconds =
                Math.round((performance.now() - pageShownAt) / 100) / 10;
            const payload =
                page.page === 1
                    ? buildPageOneSubmission(state as PageOneState, dwellSeconds)
                    : buildPageTwoSubmission(state as PageTwoState, dwellSeconds);
            try {
                const ack = await client.submit(participantId, cursor, payload);
                clearPageState(store, participantId, cursor);
                cursor = ack.next_cursor;
                saveSession(store, { participantId, cursor });
                if (ack.completed) {
                    root.innerHTML = renderCompletion();
                    clearSession(store);
                } else {
                    await showPage();
                }
            } catch (error) {
                button.disabled = false;
                const message = (error as Error).message ?? 'submission failed';
                const note = document.createElement('p');
                note.className = 'submit-error';
                note.textContent = `Could not submit: ${message}`;
                button.insertAdjacentElement('beforebegin', note);
            }
        };

        rerender();
    };

    await showPage();
}

declare global {
    interface Window {
        TREETALK_BASE_URL?: string;
    }
}

if (typeof document !== 'undefined' && document.getElementById('survey-root')) {
    const root = document.getElementById('survey-root') as HTMLElement;
    const base = window.TREETALK_BASE_URL ?? '';
    void startSurvey(root, new ApiClient(base));
}
