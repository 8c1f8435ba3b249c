/**
 * Typed client for the survey service.
 *
 * Every response is schema-validated before use, and every submission is
 * schema-validated before it leaves the client. Submissions retry on
 * network failure; if the original request actually reached the server,
 * the retry's duplicate rejection is treated as confirmation (the record
 * is committed exactly once server-side).
 */

import {
    Page,
    PageOneSubmission,
    PageTwoSubmission,
    Session,
    SubmitAck,
    errorSchema,
    pageOneSubmission,
    pageSchema,
    pageTwoSubmission,
    sessionSchema,
    submitAckSchema,
} from './schema.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
    constructor(
        readonly code: string,
        message: string,
        readonly status: number,
    ) {
        super(message);
    }
}

async function parseError(response: Response): Promise<ApiError> {
    try {
        const body = errorSchema.parse(await response.json());
        return new ApiError(body.error.code, body.error.message, response.status);
    } catch {
        return new ApiError('unknown_error', `HTTP ${response.status}`, response.status);
    }
}

export interface ApiClientOptions {
    fetchFn?: FetchLike;
    submitRetries?: number;
    retryDelayMs?: number;
}

export class ApiClient {
    private readonly fetchFn: FetchLike;
    private readonly submitRetries: number;
    private readonly retryDelayMs: number;

    constructor(
        private readonly baseUrl: string,
        options: ApiClientOptions = {},
    ) {
        this.fetchFn = options.fetchFn ?? ((url, init) => fetch(url, init));
        this.submitRetries = options.submitRetries ?? 3;
        this.retryDelayMs = options.retryDelayMs ?? 500;
    }

    async createSession(): Promise<Session> {
        const response = await this.fetchFn(`${this.baseUrl}/api/session`, {
            method: 'POST',
        });
        if (!response.ok) throw await parseError(response);
        return sessionSchema.parse(await response.json());
    }

    async getPage(participantId: string, cursor: number): Promise<Page> {
        const response = await this.fetchFn(
            `${this.baseUrl}/api/session/${encodeURIComponent(participantId)}/page/${cursor}`,
        );
        if (!response.ok) throw await parseError(response);
        return pageSchema.parse(await response.json());
    }

    async submit(
        participantId: string,
        cursor: number,
        payload: PageOneSubmission | PageTwoSubmission,
    ): Promise<SubmitAck> {
        const body = JSON.stringify(
            'ratings' in payload
                ? pageTwoSubmission.parse(payload)
                : pageOneSubmission.parse(payload),
        );
        const url = `${this.baseUrl}/api/session/${encodeURIComponent(participantId)}/page/${cursor}`;
        let lastNetworkError: unknown;
        for (let attempt = 0; attempt <= this.submitRetries; attempt += 1) {
            if (attempt > 0) await delay(this.retryDelayMs * attempt);
            let response: Response;
            try {
                response = await this.fetchFn(url, {
                    method: 'POST',
                    headers: { 'Content-Type': 'application/json' },
                    body,
                });
            } catch (error) {
                lastNetworkError = error;
                continue; // offline or dropped response: queue a retry
            }
            if (response.ok) return submitAckSchema.parse(await response.json());
            const apiError = await parseError(response);
            if (apiError.code === 'duplicate_submission') {
                // A previous attempt reached the server; nothing was lost
                // and nothing was double-recorded.
                return { accepted: true, next_cursor: cursor + 1, completed: false };
            }
            throw apiError;
        }
        throw new ApiError(
            'network_unreachable',
            `submit failed after ${this.submitRetries + 1} attempts: ${String(lastNetworkError)}`,
            0,
        );
    }
}

function delay(ms: number): Promise<void> {
    return new Promise((resolve) => setTimeout(resolve, ms));
}
