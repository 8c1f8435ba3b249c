/**
 * In-progress page state, submit gating, and local-storage recovery.
 *
 * Page 1 allows any number of checked features (including none) but
 * requires an explicit confirmation before submit; page 2 requires all
 * three Likert answers. Free-text feedback is optional. Page-2 checklists
 * start empty on purpose: the study measures the change between two
 * independent captures, so pre-filling page-1 answers would bias it.
 */

import { PageOneSubmission, PageTwoSubmission } from './schema.js';

export interface PageOneState {
    selected: boolean[];
    confirmed: boolean;
}

export interface Ratings {
    completeness?: number;
    understandability?: number;
    verboseness?: number;
}

export interface PageTwoState {
    selected: boolean[];
    ratings: Ratings;
    freeText: string;
}

export function freshPageOne(featureCount: number): PageOneState {
    return { selected: new Array(featureCount).fill(false), confirmed: false };
}

export function freshPageTwo(featureCount: number): PageTwoState {
    return { selected: new Array(featureCount).fill(false), ratings: {}, freeText: '' };
}

export function canSubmitPageOne(state: PageOneState): boolean {
    return state.confirmed;
}

export function canSubmitPageTwo(state: PageTwoState): boolean {
    const { completeness, understandability, verboseness } = state.ratings;
    return [completeness, understandability, verboseness].every(
        (value) => typeof value === 'number' && value >= 1 && value <= 5,
    );
}

export function buildPageOneSubmission(
    state: PageOneState,
    dwellSeconds: number,
): PageOneSubmission {
    return {
        selection: state.selected.map((checked) => (checked ? 1 : 0)),
        dwell_seconds: dwellSeconds,
    };
}

export function buildPageTwoSubmission(
    state: PageTwoState,
    dwellSeconds: number,
): PageTwoSubmission {
    if (!canSubmitPageTwo(state)) {
        throw new Error('page 2 submission requires all three ratings');
    }
    return {
        selection: state.selected.map((checked) => (checked ? 1 : 0)),
        dwell_seconds: dwellSeconds,
        ratings: {
            completeness: state.ratings.completeness as number,
            understandability: state.ratings.understandability as number,
            verboseness: state.ratings.verboseness as number,
        },
        free_text: state.freeText,
    };
}

/** Minimal Storage-shaped dependency so tests can inject a plain map. */
export interface KeyValueStore {
    getItem(key: string): string | null;
    setItem(key: string, value: string): void;
    removeItem(key: string): void;
}

const SESSION_KEY = 'treetalk.session';

export interface StoredSession {
    participantId: string;
    cursor: number;
}

export function saveSession(store: KeyValueStore, session: StoredSession): void {
    store.setItem(SESSION_KEY, JSON.stringify(session));
}

export function loadSession(store: KeyValueStore): StoredSession | null {
    const raw = store.getItem(SESSION_KEY);
    if (!raw) return null;
    try {
        const parsed = JSON.parse(raw);
        if (typeof parsed.participantId === 'string' && typeof parsed.cursor === 'number') {
            return { participantId: parsed.participantId, cursor: parsed.cursor };
        }
    } catch {
        // fall through: corrupted entry is treated as absent
    }
    store.removeItem(SESSION_KEY);
    return null;
}

export function clearSession(store: KeyValueStore): void {
    store.removeItem(SESSION_KEY);
}

function pageStateKey(participantId: string, cursor: number): string {
    return `treetalk.page.${participantId}.${cursor}`;
}

/** Persist checkbox/rating state so an accidental reload keeps the work. */
export function savePageState(
    store: KeyValueStore,
    participantId: string,
    cursor: number,
    state: PageOneState | PageTwoState,
): void {
    store.setItem(pageStateKey(participantId, cursor), JSON.stringify(state));
}

export function loadPageState<T extends PageOneState | PageTwoState>(
    store: KeyValueStore,
    participantId: string,
    cursor: number,
    fallback: T,
): T {
    const raw = store.getItem(pageStateKey(participantId, cursor));
    if (!raw) return fallback;
    try {
        const parsed = JSON.parse(raw) as T;
        if (Array.isArray(parsed.selected) && parsed.selected.length === fallback.selected.length) {
            return parsed;
        }
    } catch {
        // corrupted entry: start fresh
    }
    return fallback;
}

export function clearPageState(
    store: KeyValueStore,
    participantId: string,
    cursor: number,
): void {
    store.removeItem(pageStateKey(participantId, cursor));
}
