"""Chat prompt composition, LLM providers, and the grounding post-check."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import EmptyQuestion, ProviderUnavailable
from .retrieval import ChatSession, ContextBundle, serialize_results, update_session

SYSTEM_RULES = (
    "You are an assistant for question-answering tasks.\n"
    "Use the following pieces of retrieved context to answer the question.\n"
    "If you don't know the answer, say that you don't know.\n"
    "If you need more information to answer the question, ask for it.\n"
)

DONT_KNOW_RESPONSE = "I don't know — no relevant context was retrieved."

DEFAULT_UNGROUNDED_OK_PATTERNS = (
    "i don't know",
    "i do not know",
    "no relevant context",
    "could you clarify",
    "can you clarify",
    "please provide more",
    "need more information",
)

_TAG_RE = re.compile(r"\[S(\d+)\]")


@dataclass(frozen=True)
class Answer:
    text: str
    citations: Tuple[str, ...]
    grounded: bool
    provider_id: str


class EchoProvider:
    """Returns its prompt verbatim; useful for citation plumbing tests."""

    provider_id = "echo"

    def __init__(self, context_budget: int = 30000):
        self.context_budget = context_budget
        self.calls: List[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        return prompt


class ScriptedProvider:
    """Replays canned completions in order (cycling on exhaustion)."""

    provider_id = "scripted"

    def __init__(self, responses: Sequence[str], context_budget: int = 30000):
        if not responses:
            raise ValueError("responses must be non-empty")
        self.responses = list(responses)
        self.context_budget = context_budget
        self.calls: List[str] = []

    def complete(self, prompt: str) -> str:
        reply = self.responses[min(len(self.calls), len(self.responses) - 1)]
        self.calls.append(prompt)
        return reply


class StubExtractionProvider:
    """Always returns an empty JSON object; extraction then fills every
    field with the N/A sentinel. Default offline extraction provider."""

    provider_id = "stub"
    context_budget = 10**9

    def __init__(self):
        self.calls: List[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        return "{}"


class HTTPLLMProvider:
    """Adapter for a remote model: POST {"prompt": ...} -> {"completion": ...}."""

    def __init__(self, endpoint: str, api_key: str = "", provider_id: str = "http-llm",
                 context_budget: int = 30000, timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.provider_id = provider_id
        self.context_budget = context_budget
        self.timeout = timeout
        self.calls: List[str] = []

    def complete(self, prompt: str) -> str:
        import requests

        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self.calls.append(prompt)
        try:
            resp = requests.post(
                self.endpoint, json={"prompt": prompt}, headers=headers, timeout=self.timeout
            )
            resp.raise_for_status()
            return resp.json()["completion"]
        except Exception as exc:
            raise ProviderUnavailable(f"llm endpoint failed: {exc}") from exc


def _render(context_block: str, history_lines: List[str], question: str) -> str:
    parts = [SYSTEM_RULES, context_block]
    if history_lines:
        parts.append("Conversation so far:\n" + "\n".join(history_lines))
    parts.append(f"Question: {question}\nHelpful Answer:")
    return "\n\n".join(parts)


def build_chat_prompt(
    bundle: ContextBundle,
    history: Sequence,
    question: str,
    context_budget: int = 30000,
) -> str:
    """Render rules, context, bounded history, then the question.

    When over budget, lowest-ranked context is dropped first, then oldest
    history; the question is never truncated.
    """
    if not question or not question.strip():
        raise EmptyQuestion("question must be non-empty")

    history_lines: List[str] = []
    for turn in history:
        history_lines.append(f"Q: {turn.question}")
        history_lines.append(f"A: {turn.answer}")

    results = list(bundle.results)
    while True:
        prompt = _render(serialize_results(results), history_lines, question)
        if len(prompt) <= context_budget:
            return prompt
        if results:
            results.pop()  # drop the lowest-ranked source first
        elif history_lines:
            history_lines = history_lines[2:]  # drop the oldest Q/A pair
        else:
            return prompt


def grounding_check(
    answer_text: str,
    bundle: ContextBundle,
    ok_patterns: Sequence[str] = DEFAULT_UNGROUNDED_OK_PATTERNS,
) -> Tuple[bool, List[str], str]:
    """Extract [S<n>] citations; strip tags that do not exist in the bundle.

    Returns (grounded, citations, cleaned_text). An answer is grounded when
    it cites at least one valid tag, or reads as a don't-know/clarify
    response; any invalid tag makes it ungrounded.
    """
    valid = set(bundle.tags())
    cited: List[str] = []
    invalid = False
    for m in _TAG_RE.finditer(answer_text):
        tag = m.group(0)
        if tag in valid:
            if tag not in cited:
                cited.append(tag)
        else:
            invalid = True
    cleaned = answer_text
    if invalid:
        cleaned = _TAG_RE.sub(lambda m: m.group(0) if m.group(0) in valid else "", answer_text)
    low = answer_text.lower()
    is_ok_response = any(p in low for p in ok_patterns)
    grounded = (bool(cited) or is_ok_response) and not invalid
    return grounded, cited, cleaned


def answer(
    question: str,
    session: ChatSession,
    index,
    embedder,
    llm,
    chunk_texts: Dict[str, str],
    k: int = 4,
    ef_search: int = 64,
) -> Answer:
    """Retrieve, prompt, complete, ground-check, and record the turn."""
    from .retrieval import retrieve

    if not question or not question.strip():
        raise EmptyQuestion("question must be non-empty")
    bundle = retrieve(question, k, index, embedder, chunk_texts, ef_search=ef_search)

    if not bundle.results:
        ans = Answer(text=DONT_KNOW_RESPONSE, citations=(), grounded=True,
                     provider_id=getattr(llm, "provider_id", "unknown"))
        update_session(session, question, bundle, ans.text)
        return ans

    prompt = build_chat_prompt(
        bundle, session.recent_turns(), question,
        context_budget=getattr(llm, "context_budget", 30000),
    )
    completion = llm.complete(prompt)
    grounded, citations, cleaned = grounding_check(completion, bundle)
    ans = Answer(text=cleaned, citations=tuple(citations), grounded=grounded,
                 provider_id=getattr(llm, "provider_id", "unknown"))
    update_session(session, question, bundle, ans.text)
    return ans
