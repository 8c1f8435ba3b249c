/**
 * Zod schemas for every payload exchanged with the survey service.
 * Field names and shapes mirror docs/service_api.md exactly; both incoming
 * responses and outgoing submissions are validated against them.
 */

import { z } from 'zod';

export const bit = z.union([z.literal(0), z.literal(1)]);
export const likert = z.number().int().min(1).max(5);

export const sessionSchema = z
    .object({
        participant_id: z.string().min(1),
        cursor: z.number().int().min(0),
        total_pages: z.number().int().positive(),
        feature_count: z.number().int().positive(),
    })
    .strict();

const pageCommon = {
    scenario: z.string().min(1),
    cursor: z.number().int().min(0),
    total_pages: z.number().int().positive(),
    patient: z.array(z.object({ feature: z.string(), value: z.string() }).strict()),
    features: z.array(z.string()),
    selection_prompt: z.string(),
};

export const pageOneSchema = z
    .object({ ...pageCommon, page: z.literal(1) })
    .strict();

export const pageTwoSchema = z
    .object({
        ...pageCommon,
        page: z.literal(2),
        prediction: z.enum(['HighRisk', 'LowRisk']),
        explanation: z.string().min(1),
        likert_prompts: z
            .object({
                completeness: z.string(),
                understandability: z.string(),
                verboseness: z.string(),
            })
            .strict(),
        free_text_prompt: z.string(),
    })
    .strict();

export const pageSchema = z.union([pageOneSchema, pageTwoSchema]);

export const pageOneSubmission = z
    .object({
        selection: z.array(bit),
        dwell_seconds: z.number().nonnegative(),
    })
    .strict();

export const pageTwoSubmission = z
    .object({
        selection: z.array(bit),
        dwell_seconds: z.number().nonnegative(),
        ratings: z
            .object({
                completeness: likert,
                understandability: likert,
                verboseness: likert,
            })
            .strict(),
        free_text: z.string(),
    })
    .strict();

export const submitAckSchema = z
    .object({
        accepted: z.literal(true),
        next_cursor: z.number().int().min(0),
        completed: z.boolean(),
    })
    .strict();

export const errorSchema = z
    .object({
        error: z.object({ code: z.string(), message: z.string() }).strict(),
    })
    .strict();

export type Session = z.infer<typeof sessionSchema>;
export type PageOne = z.infer<typeof pageOneSchema>;
export type PageTwo = z.infer<typeof pageTwoSchema>;
export type Page = z.infer<typeof pageSchema>;
export type PageOneSubmission = z.infer<typeof pageOneSubmission>;
export type PageTwoSubmission = z.infer<typeof pageTwoSubmission>;
export type SubmitAck = z.infer<typeof submitAckSchema>;
