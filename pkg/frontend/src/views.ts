/**
 * HTML renderers for the two-page scenario flow.
 *
 * Pure string builders with no DOM dependency, so they unit-test cheaply
 * and the blindness check can scan exactly what a participant's browser
 * would receive. Navigation is strictly forward: no back affordance is
 * ever rendered.
 */

import { Page, PageOne, PageTwo } from './schema.js';
import {
    PageOneState,
    PageTwoState,
    canSubmitPageOne,
    canSubmitPageTwo,
} from './state.js';

export function escapeHtml(text: string): string {
    return text
        .replace(/&/g, '&amp;')
        .replace(/</g, '&lt;')
        .replace(/>/g, '&gt;')
        .replace(/"/g, '&quot;')
        .replace(/'/g, '&#39;');
}

const LIKERT_LABELS = [
    'Strongly disagree',
    'Disagree',
    'Neither agree nor disagree',
    'Agree',
    'Strongly agree',
];

function progressLine(page: Page): string {
    const scenario = Math.floor(page.cursor / 2) + 1;
    const total = page.total_pages / 2;
    return `<p class="progress">Scenario ${scenario} of ${total} &middot; page ${page.page} of 2</p>`;
}

function patientCard(page: Page): string {
    const rows = page.patient
        .map(
            (row) =>
                `<tr><th scope="row">${escapeHtml(row.feature)}</th>` +
                `<td>${escapeHtml(row.value)}</td></tr>`,
        )
        .join('\n      ');
    return `<table class="patient-card">
    <caption>Patient information</caption>
    <tbody>
      ${rows}
    </tbody>
  </table>`;
}

function featureChecklist(page: Page, selected: boolean[]): string {
    const boxes = page.features
        .map((feature, i) => {
            const checked = selected[i] ? ' checked' : '';
            return (
                `<label class="feature-box"><input type="checkbox" data-feature-index="${i}"${checked}>` +
                `<span>${escapeHtml(feature)}</span></label>`
            );
        })
        .join('\n    ');
    return `<fieldset class="feature-checklist" data-role="selection">
    <legend>${escapeHtml(page.selection_prompt)}</legend>
    ${boxes}
  </fieldset>`;
}

function submitButton(enabled: boolean): string {
    return `<button type="button" class="submit" data-role="submit"${enabled ? '' : ' disabled'}>Submit and continue</button>`;
}

export function renderPageOne(page: PageOne, state: PageOneState): string {
    const confirmed = state.confirmed ? ' checked' : '';
    return `<section class="scenario-page" data-scenario="${escapeHtml(page.scenario)}" data-page="1">
  ${progressLine(page)}
  ${patientCard(page)}
  ${featureChecklist(page, state.selected)}
  <label class="confirm-box"><input type="checkbox" data-role="confirm"${confirmed}>
  <span>I have reviewed the patient information and made my selections.</span></label>
  ${submitButton(canSubmitPageOne(state))}
</section>`;
}

function likertBlock(name: string, prompt: string, chosen: number | undefined): string {
    const radios = LIKERT_LABELS.map((label, i) => {
        const value = i + 1;
        const checked = chosen === value ? ' checked' : '';
        return (
            `<label class="likert-option"><input type="radio" name="${name}" value="${value}"` +
            ` data-rating="${name}"${checked}><span>${escapeHtml(label)}</span></label>`
        );
    }).join('\n    ');
    return `<fieldset class="likert" data-role="likert-${name}">
    <legend>${escapeHtml(prompt)}</legend>
    ${radios}
  </fieldset>`;
}

export function renderPageTwo(page: PageTwo, state: PageTwoState): string {
    const predictionText =
        page.prediction === 'HighRisk' ? 'high risk of CHD' : 'low risk of CHD';
    return `<section class="scenario-page" data-scenario="${escapeHtml(page.scenario)}" data-page="2">
  ${progressLine(page)}
  ${patientCard(page)}
  <p class="prediction">The AI system predicts this patient is at <strong>${predictionText}</strong>.</p>
  <blockquote class="explanation">${escapeHtml(page.explanation)}</blockquote>
  ${featureChecklist(page, state.selected)}
  ${likertBlock('completeness', page.likert_prompts.completeness, state.ratings.completeness)}
  ${likertBlock('understandability', page.likert_prompts.understandability, state.ratings.understandability)}
  ${likertBlock('verboseness', page.likert_prompts.verboseness, state.ratings.verboseness)}
  <label class="free-text">
    <span>${escapeHtml(page.free_text_prompt)}</span>
    <textarea data-role="free-text" rows="3">${escapeHtml(state.freeText)}</textarea>
  </label>
  ${submitButton(canSubmitPageTwo(state))}
</section>`;
}

export function renderPage(page: Page, state: PageOneState | PageTwoState): string {
    if (page.page === 1) return renderPageOne(page, state as PageOneState);
    return renderPageTwo(page, state as PageTwoState);
}

export function renderCompletion(): string {
    return `<section class="completion">
  <h2>All scenarios complete</h2>
  <p>Thank you. Your responses have been recorded.</p>
</section>`;
}

export function renderFatalError(message: string): string {
    return `<section class="fatal-error">
  <h2>Something went wrong</h2>
  <p>${escapeHtml(message)}</p>
  <button type="button" data-role="retry">Try again</button>
</section>`;
}
