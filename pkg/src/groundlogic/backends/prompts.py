"""Prompt templates for each language/vision model role."""

from __future__ import annotations

from typing import Sequence

CAPTION_PROMPT = "<image> Please describe the image in detail."

_CATEGORY_EXAMPLES = (
    ("the man in a red jacket holding an umbrella", '{"output": ["man", "umbrella"]}'),
    ("second car from the left", '{"output": ["car"]}'),
    ("woman sitting on the bench next to a dog", '{"output": ["woman", "bench", "dog"]}'),
)

CATEGORY_PROMPT = """\
You're an AI assistant designed to find detailed information from image.

You need to find important objects based on the given query which is the object you need to find. The query normally is a set of words which includes a object name and the attributes of the object.

Here are some examples:
{examples}
Your output must be a JSON object contains the flatten list of string. For example: {{"output": ["apple", "orange", "chair", "umbrella"]}}

Caption: {caption}
Query: {query}
Answer: """

_LOGIC_EXAMPLES = (
    (
        "the man in a red jacket holding an umbrella",
        'target(ID) :- entity(ID, "man", _, _, _, _), attribute(ID, "wearing_red_jacket"), '
        'entity(U, "umbrella", _, _, _, _), relation(ID, U, "holding").',
    ),
    (
        "car on the far left",
        'target(ID) :- entity(ID, "car", X1, _, _, _), X1 < 100.',
    ),
)

LOGIC_PROMPT = """\
You're an AI assistant designed to generate the ProbLog code (a logic programming language similar to Prolog).

You need to generate a new rule "target" that will be used to query the target objects in the image based on given text prompt.

The names of entity categories are {categories}.

The output is the code. For example:
```problog
target(ID) :- entity(ID, "<some category>", _, _, _, _), relation(ID, _, _), attribute(ID, _).
```

More examples:
{examples}
Complete the following ProbLog code:
```problog
{context}
```

Your output should be the ProbLog code.

find the target "{query}"
Your answer: """

RELATION_PROMPT = """\
<image> You're an AI assistant designed to find the relations of objects in the given image.

The interested objects are highlighted by bounding boxes (X1, Y1, X2, Y2). They are:

A: the {category_a} labeled by red bounding box {box_a}.
B: the {category_b} labeled by red bounding box {box_b}.

Only consider the camera view. Note you are focusing to analyze the relation A to B, do not consider the relation B to A. Please answer "Yes" or "No" for the following question.

Is A {relation} B?

Your answer is:"""

ANSWER_PROMPT = """\
<image> You're an image analyst designed to check if the highlighted object in the image meets the query description.

The query is: "{query}"

Please check the highlighted object "A" in the image and answer the question: Does the highlighted object meet the query description? Your answer should be "Yes" or "No".

Your answer:"""

ATTRIBUTE_PROMPT = """\
<image> The image is a crop around a single object.

Does the object match the description "{attribute}"? Please answer "Yes" or "No".

Your answer:"""

FEEDBACK_SUFFIX = "\n\nFeedback on your previous answer: {feedback}\n"


def with_feedback(prompt: str, feedback: str | None) -> str:
    if not feedback:
        return prompt
    return prompt + FEEDBACK_SUFFIX.format(feedback=feedback)


def category_prompt(caption: str | None, query: str, feedback: str | None = None) -> str:
    examples = "".join(f"Query: {q}\nAnswer: {a}\n\n" for q, a in _CATEGORY_EXAMPLES)
    text = CATEGORY_PROMPT.format(
        examples=examples, caption=caption or "(no caption)", query=query
    )
    return with_feedback(text, feedback)


def logic_prompt(
    query: str, context: str, categories: Sequence[str], feedback: str | None = None
) -> str:
    examples = "".join(
        f'find the target "{q}"\n```problog\n{code}\n```\n\n' for q, code in _LOGIC_EXAMPLES
    )
    text = LOGIC_PROMPT.format(
        categories=", ".join(f'"{c}"' for c in categories),
        examples=examples,
        context=context.rstrip("\n"),
        query=query,
    )
    return with_feedback(text, feedback)


def relation_prompt(
    category_a: str, box_a: Sequence[int], category_b: str, box_b: Sequence[int], relation: str
) -> str:
    fmt = lambda box: "(" + ", ".join(str(v) for v in box) + ")"
    return RELATION_PROMPT.format(
        category_a=category_a,
        box_a=fmt(box_a),
        category_b=category_b,
        box_b=fmt(box_b),
        relation=relation,
    )


def answer_prompt(query: str) -> str:
    return ANSWER_PROMPT.format(query=query)


def attribute_prompt(attribute: str) -> str:
    return ATTRIBUTE_PROMPT.format(attribute=attribute)
