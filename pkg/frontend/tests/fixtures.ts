import { PageOne, PageTwo } from '../src/schema.js';

export const FEATURES = [
    'Age',
    'Gender',
    'BMI',
    'Diabetic',
    'Cholesterol',
    'HDL',
    'Triglycerides',
    'Cholesterol HDL ratio',
    'Systolic blood pressure',
    'Smoking',
    'Alcohol amount',
];

const PATIENT = FEATURES.map((feature, i) => ({ feature, value: `v${i}` }));

export const COMPLETENESS_PROMPT =
    'This explanation helps me completely understand why the AI system made the prediction';
export const UNDERSTANDABILITY_PROMPT =
    'Based on the explanation I understand how the model would behave for another patient';
export const VERBOSENESS_PROMPT =
    'This explanation is long and uses more words than required';

export function pageOneFixture(overrides: Partial<PageOne> = {}): PageOne {
    return {
        scenario: 'local-easy',
        cursor: 2,
        page: 1,
        total_pages: 10,
        patient: PATIENT,
        features: FEATURES,
        selection_prompt:
            "Pick all the features you think might be influential in predicting this patient's risk of CHD.",
        ...overrides,
    };
}

export function pageTwoFixture(overrides: Partial<PageTwo> = {}): PageTwo {
    return {
        scenario: 'local-easy',
        cursor: 3,
        page: 2,
        total_pages: 10,
        patient: PATIENT,
        features: FEATURES,
        selection_prompt:
            "Based on the explanation, pick all the features you think were influential in predicting this patient's risk of CHD.",
        prediction: 'HighRisk',
        explanation:
            'This explanation is for a Female patient aged 74.\n' +
            'When Smoking is Heavy and Cholesterol is High, the patient is very likely at high risk.',
        likert_prompts: {
            completeness: COMPLETENESS_PROMPT,
            understandability: UNDERSTANDABILITY_PROMPT,
            verboseness: VERBOSENESS_PROMPT,
        },
        free_text_prompt: 'Any feedback on this explanation? (optional)',
        ...overrides,
    };
}
