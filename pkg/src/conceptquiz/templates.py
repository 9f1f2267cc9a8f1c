"""Prompt template registry.

One immutable template per pipeline stage, baseline variant, and judge
rubric. Placeholders use ``{name}`` syntax; every placeholder in a body is a
required variable, and rendering is exact substitution with no other
mutation of the template text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import MissingVariable, UnknownTemplate

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str
    required_vars: frozenset[str] = field(init=False)

    def __post_init__(self) -> None:
        found = frozenset(_PLACEHOLDER_RE.findall(self.body))
        object.__setattr__(self, "required_vars", found)

    def render(self, variables: dict[str, object]) -> str:
        missing = self.required_vars - set(variables)
        if missing:
            raise MissingVariable(
                f"template {self.name!r} missing: {', '.join(sorted(missing))}"
            )
        out = self.body
        for name in self.required_vars:
            out = out.replace("{" + name + "}", str(variables[name]))
        return out


_MAP = """\
Instructions:
You are an expert educator specializing in creating detailed concept maps from academic texts. Given the following excerpt from a longer document, extract the main ideas, detailed concepts, and supporting details that are critical to understanding the material.

Focus on identifying:
- Key concepts or terms introduced in the text.
- Definitions or explanations of these concepts.
- Relationships between concepts.
- Any examples or applications mentioned.

Use clear, bullet-point summaries, organized by topic. Here is the excerpt:

Context:
{context}

Respond with a structured list of detailed main ideas and concepts.
"""

_COMBINE = """\
Instructions:
You are combining multiple concept maps into a single, comprehensive summary while retaining all key ideas and details. Below are several lists of main ideas and concepts extracted from a larger document.

Your task is to:
1. Merge these lists into a single structured list, removing redundancies while keeping all unique and detailed information.
2. Ensure all main ideas, relationships, and examples are preserved and clearly organized.

Here are the concept maps to combine:

Context:
{context}

Respond with the consolidated and organized list of main ideas and concepts.
"""

_REDUCE = """\
Instructions:
You are reducing sets of detailed concept maps, a concise yet comprehensive list of important concepts, generated by extracting concepts from a document and potentially combining subsets of them that are relevant to each other.
The goal is to create a structured resource that fully captures the essence of the material for testing and teaching purposes.

Your task is to:
- Identify the most critical concepts from the detailed concept map.
- Provide a full-sentence summary for each concept that explains its significance, its relationship to other concepts, and any relevant examples or applications.
- Ensure that the summaries are clear, self-contained, and detailed enough to aid in understanding without requiring additional context.
- If necessary, combine related concepts into a single summary. Some of the concept maps have broader headings that can be used to guide this process.

Here is the detailed concept map:

Context:
{context}

Respond with a structured list where each important concept is followed by its full-sentence, detailed summary. For example:
1. Concept Name: [Detailed full-sentence summary explaining the concept, its relevance, and any examples or applications.]
2. Another Concept: [Detailed full-sentence summary explaining this concept, its connections to other ideas, and its role in understanding the material.]

Continue in this format for all important concepts.
"""

_RANK = """\
Instructions:
Given the following groups of main ideas extracted from a text, rank them in order of importance, with the most important main idea receiving a rank of 1 and lower ranks for less important ideas.
Focus on the most important aspects of the text and the main ideas that are critical to understanding the material. While sometimes important, background information or less critical ideas should be ranked lower.

When ranking:
- Assign a unique number to each main idea, starting from 1.
- Ensure that the most important main idea is ranked first.
- Rank the main ideas based on their relevance and significance.

Example:
    Input: [Main Idea 1, Main Idea 2, Main Idea 3]
    Output: [2, 1, 3]

Main Ideas:
{main_ideas}
"""

_SAVAAL_GENERATE = """\
Instructions:
Based on the following main idea and its relevant passages, create {num_questions} multiple-choice questions that require deep understanding, critical thinking, and detailed analysis. The questions should go beyond mere factual recall, involving higher-order thinking skills like analysis, synthesis, and evaluation.
Do not use the phrases "main idea" or "passages" in the question statement. Instead, directly address the content or concepts described.
Provide four answer choices for each question:
- The choices should start with A., B., C., and D.
- One correct answer.
- Three plausible distractors that are contextually appropriate, relevant to the content, and reflect common misunderstandings or errors without introducing contradictory or irrelevant information.

Note: The questions should be focused on one concept and not very long, DO NOT ask multiple questions in one.

Main Idea:
{main_idea}

Passages:
{passages}
"""

_DIRECT_GENERATE = """\
Instructions:
Based on the following context, create {num_questions} multiple-choice questions that require deep understanding, critical thinking, and detailed analysis.
The questions should go beyond mere factual recall, involving higher-order thinking skills like analysis, synthesis, and evaluation.

Provide four answer choices for each question:
- The choices should start with A., B., C., and D.
- One correct answer.
- Three plausible distractors that are:
  - Contextually appropriate.
  - Relevant to the content.
  - Reflect common misunderstandings or errors without introducing contradictory or irrelevant information.

Note: The questions should focus on one concept and not be overly long.
DO NOT ask multiple questions in one.

Context:
{context}
"""

_DIRECT_ADDITIONAL = """\
Instructions:
Now, please create {num_questions} additional multiple-choice questions that require deep understanding, critical thinking, and detailed analysis.
The questions should go beyond mere factual recall, involving higher-order thinking skills like analysis, synthesis, and evaluation.

Provide four answer choices for each question:
- The choices should start with A., B., C., and D.
- One correct answer.
- Three plausible distractors that are:
  - Contextually appropriate.
  - Relevant to the content.
  - Reflect common misunderstandings or errors without introducing contradictory or irrelevant information.

Note: The questions should focus on one concept and not be overly long.
Note: The questions should be different from the ones generated in the previous step.

Context:
{context}
"""

_REFINE = """\
Instructions:
You are given the following information about a multiple-choice question:

Main Idea: {main_idea}

Relevant Passages: {passages}

Question: {question}

Current Options: {options}

Correct Answer: {correct_answer}

Your task is to refine the three INCORRECT options in a way that:
- They remain closely related to the topic of the CORRECT option.
- They are incorrect but not obviously off-topic.
- They are PLAUSIBLE enough to confuse the reader.
- The correct option (and its label) must REMAIN UNCHANGED.
- The three incorrect options should ALIGN with the context of the correct answer; for example, if the question asks about advantages, a distractor that lists disadvantages would be considered bad.

Return the final question, the NEW options, and the correct answer.

REMEMBER:
The correct answer is: {correct_answer}.
"""


def _judge_body(criteria: str) -> str:
    return f"""\
For the following multiple-choice question:
-----------
Question: {{question}}

Options: {{options}}

Answer: {{answer}}
-----------
Please answer the following:

Please carefully read the multiple-choice question, the options, and the correct answer.
{criteria}

Please output only a score between 1 and 4.
"""


_JUDGE_UNDERSTANDING = _judge_body(
    """Rate the understanding level of the question on a scale of 1 to 4 based on the following criteria:
- Score 4 if the question tests a deep understanding of a concept, requiring integration and application of ideas.
- Score 3 if the question tests understanding of a concept but is more straightforward, requiring less integration or application.
- Score 2 if the question largely depends on recall but includes some context-specific details that require a conceptual understanding.
- Score 1 if the question primarily tests memorization of facts or details with minimal to no application of concepts."""
)

_JUDGE_CHOICES = _judge_body(
    """Rate the quality of choices in the question on a scale of 1 to 4 based on the following criteria:
- Score 4 if it is challenging to eliminate any incorrect choice due to well-crafted distractors that are plausible, unambiguous, and relevant to the question.
- Score 3 if incorrect choices can be somewhat challenging to eliminate, requiring a good understanding of the material, but they are less sophisticated.
- Score 2 if most incorrect choices are fairly easy to eliminate, with perhaps one plausible distractor.
- Score 1 if incorrect choices are very easy to eliminate, often due to being obviously incorrect or irrelevant."""
)

_JUDGE_CLARITY = _judge_body(
    """Rate the clarity level of the question on a scale of 1 to 4 based on the following criteria:
- Score 4 if the question is completely clear and unambiguous.
- Score 3 if the question is mostly clear, but may have some ambiguity.
- Score 2 if the question has notable ambiguity that could confuse the reader.
- Score 1 if the question is highly confusing or unclear."""
)

# No published rubric exists for usability; this one mirrors the quiz-use
# question asked of human reviewers and the structure of the other rubrics.
_JUDGE_USABILITY = _judge_body(
    """Rate the usability of the question on a scale of 1 to 4 based on the following criteria:
- Score 4 if the question could be used on a graduate-level quiz as-is, with no edits required.
- Score 3 if the question could be used on a graduate-level quiz after small changes.
- Score 2 if the question would need substantial rework before it could be used on a quiz.
- Score 1 if the question is not usable on a quiz in its current form."""
)

_JUDGE_DIFFICULTY = _judge_body(
    """Rate the difficulty level of the question on a scale of 1 to 4 based on the following criteria:
- Score 4 if the question is very challenging, requiring deep understanding and advanced conceptual application.
- Score 3 if the question is moderately difficult, requiring understanding and some conceptual application.
- Score 2 if the question is relatively easy and mainly requires recall or basic understanding.
- Score 1 if the question is very easy and can be answered without specific knowledge."""
)

_JUDGE_COGNITIVE = _judge_body(
    """Rate the cognitive level of the question based on Bloom's taxonomy on a scale of 1 to 4 based on the following criteria:
- Score 4 if the question requires higher-level thinking (e.g., analysis, synthesis, or evaluation).
- Score 3 if the question requires application or understanding of concepts.
- Score 2 if the question requires basic understanding or recall.
- Score 1 if the question only tests rote memorization with minimal understanding."""
)

_JUDGE_ENGAGEMENT = _judge_body(
    """Rate the engagement level of the question on a scale from 1 to 4 based on the following criteria:
- Score 4 if the question is highly engaging and thought-provoking.
- Score 3 if the question is engaging but not particularly unique or thought-provoking.
- Score 2 if the question is somewhat engaging but fairly straightforward.
- Score 1 if the question is uninteresting or not engaging."""
)


REGISTRY: dict[str, PromptTemplate] = {
    t.name: t
    for t in (
        PromptTemplate("map", _MAP),
        PromptTemplate("combine", _COMBINE),
        PromptTemplate("reduce", _REDUCE),
        PromptTemplate("rank", _RANK),
        PromptTemplate("savaal_generate", _SAVAAL_GENERATE),
        PromptTemplate("direct_generate", _DIRECT_GENERATE),
        PromptTemplate("direct_additional", _DIRECT_ADDITIONAL),
        PromptTemplate("refine", _REFINE),
        PromptTemplate("judge_understanding", _JUDGE_UNDERSTANDING),
        PromptTemplate("judge_choices", _JUDGE_CHOICES),
        PromptTemplate("judge_clarity", _JUDGE_CLARITY),
        PromptTemplate("judge_usability", _JUDGE_USABILITY),
        PromptTemplate("judge_difficulty", _JUDGE_DIFFICULTY),
        PromptTemplate("judge_cognitive", _JUDGE_COGNITIVE),
        PromptTemplate("judge_engagement", _JUDGE_ENGAGEMENT),
    )
}


def get_template(name: str) -> PromptTemplate:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownTemplate(name) from None


def render(template_name: str, variables: dict[str, object]) -> str:
    """Render a registered template with exact placeholder substitution."""
    return get_template(template_name).render(variables)


def instruction_text(name: str) -> str:
    """Instruction portion of a template: the body above its first input label.

    Used to compose the single-prompt baseline, which concatenates every
    stage's instructions ahead of one shared context block.
    """
    body = get_template(name).body
    cut = len(body)
    for label in ("\nContext:", "\nMain Ideas:", "\nMain Idea:", "\nPassages:"):
        idx = body.find(label)
        if idx != -1:
            cut = min(cut, idx)
    return body[:cut].rstrip() + "\n"
