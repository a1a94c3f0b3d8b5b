"""Deterministic offline stand-ins for the model provider and the apps.

``build_mock(seed)`` returns a provider that plays every model role plus an
app fleet, all sharing one :class:`VirtualClock`.  Nothing sleeps and nothing
depends on process state, so a mock run with a given seed is reproducible
byte for byte.
"""

from __future__ import annotations

import hashlib
import re
from typing import Any

from appqual.errors import AppUnreachable
from appqual.gateway import MockProvider, Role, VirtualClock, hashed_embedding
from appqual.judge import AppReply
from appqual.prompting import fenced

TOPICS: dict[str, frozenset[str]] = {
    "legal": frozenset("""
        law laws legal lawyer lawyers attorney attorneys counsel contract contracts litigation
        lawsuit court labor dispute disputes regulation regulations statute statutes clause
        clauses lease tenant landlord consulting consultation rights liability dismissal
        arbitration compensation divorce inheritance
    """.split()),
    "travel": frozenset("""
        travel traveler travelers trip trips itinerary itineraries planning plan plans planner
        tour tours tourist destination destinations hotel hotels flight flights route routes
        sightseeing vacation holiday attractions journey visa backpacking
    """.split()),
}
TOPIC_LABELS = {"legal": "laws consulting analysis", "travel": "travel itinerary planning"}

_WORD = re.compile(r"[a-z][a-z'-]*")


def _h(*parts: Any) -> int:
    data = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "big")


def topic_hits(text: str) -> dict[str, int]:
    words = _WORD.findall(text.lower())
    return {t: sum(w in vocab for w in words) for t, vocab in TOPICS.items()}


def topic_embedding(text: str, dimension: int = 32) -> list[float]:
    """Topic counts (heavily weighted) followed by a hashed bag of words."""
    hits = topic_hits(text)
    return [4.0 * hits[t] for t in sorted(TOPICS)] + hashed_embedding(text, dimension)


def _field(prompt: str, name: str) -> str:
    m = re.search(rf"^{re.escape(name)}:\s*(.*)$", prompt, re.MULTILINE)
    return m.group(1).strip() if m else ""


def _section(prompt: str, tag: str) -> str:
    m = re.search(rf"<{tag}>\n?(.*?)\n?</{tag}>", prompt, re.DOTALL)
    return m.group(1).strip() if m else ""


def _last_user(messages: list[dict[str, str]]) -> str:
    return next(m["content"] for m in messages if m["role"] == "user")


# --- scenario content ----------------------------------------------------

def _rubric(subject: str) -> dict[str, str]:
    return {
        "1": f"{subject} is missing or wrong throughout; the answer would mislead the user.",
        "2": f"{subject} is weak: major errors or omissions outweigh the useful parts.",
        "3": f"{subject} is acceptable: mostly correct but with noticeable gaps or imprecision.",
        "4": f"{subject} is good: correct and relevant with only minor gaps.",
        "5": f"{subject} is excellent: fully correct, specific and tailored to the question.",
    }


SCENARIO_METRICS: dict[str, list[dict[str, Any]]] = {
    "laws consulting analysis": [
        {"name": "Legal Citation Accuracy",
         "definition": "Assesses whether legal terms cited in the answer are accurate and relevant to the question.",
         "rubric": _rubric("Citation of statutes and legal provisions")},
        {"name": "Terminology Clarity",
         "definition": "Evaluates whether legal terminology is used appropriately and clearly explained.",
         "rubric": _rubric("Use and explanation of legal terminology")},
        {"name": "Answer Completeness & Logic",
         "definition": "Judges if the answer addresses key legal points, is logically organized, and has a well-founded conclusion.",
         "rubric": _rubric("Coverage of key legal points and logical structure")},
    ],
    "travel itinerary planning": [
        {"name": "Personalization Match",
         "definition": "Measures whether the plan meets all personalized requirements (e.g., budget, interests, time constraints).",
         "rubric": _rubric("Fit to the stated budget, interests and time constraints")},
        {"name": "Itinerary Logic & Flow",
         "definition": "Assesses the reasonableness and flow of the itinerary, including transportation and activity planning.",
         "rubric": _rubric("Feasibility and ordering of the itinerary")},
        {"name": "Content Innovation",
         "definition": "Evaluates whether recommendations include unique and insightful local attractions or activities.",
         "rubric": _rubric("Originality and local insight of the recommendations")},
    ],
}

TASK_BANK: dict[str, list[str]] = {
    "Legal Citation Accuracy": [
        "If an employee is dismissed without notice, which labor law articles apply?",
        "My landlord kept my full security deposit without giving a reason; which legal provisions protect tenants in this situation?",
        "A supplier delivered goods three weeks late and our contract has no penalty clause; which provisions on breach of contract can I rely on?",
        "I was injured by a falling sign outside a shop; which articles on tort liability decide whether the shop owner must pay compensation?",
        "My employer refuses to pay overtime for weekend shifts; which labor regulations set the overtime rate and how do I cite them?",
    ],
    "Terminology Clarity": [
        "Explain the meaning of 'force majeure' in a contract dispute to a layperson.",
        "What is the difference between a 'void' contract and a 'voidable' contract, explained for a small business owner with an example?",
        "Explain what 'statute of limitations' means for someone who wants to sue a former business partner over an unpaid loan.",
        "My lawyer mentioned 'joint and several liability' in a car accident case; can you explain the term in plain language with a concrete example?",
        "Explain the term 'liquidated damages' to a freelancer who is about to sign a design services agreement.",
    ],
    "Answer Completeness & Logic": [
        "I'm a tenant and I need to break my lease early. What are the legal steps I need to follow? What risks should I be aware of?",
        "My business partner wants to leave our two-person company; what legal steps should we take to split the assets, and what disputes commonly arise?",
        "I bought a used car that broke down a week later and the dealer refuses a refund; what are my legal options, step by step, and which is most likely to succeed?",
        "A former employee posted false claims about my restaurant online; what legal remedies do I have, and what evidence should I collect first?",
        "My parents died without a will and my siblings disagree about the family house; how does inheritance work here and what should we do first?",
    ],
    "Personalization Match": [
        "Plan a 3-day trip to Chengdu for a family with kids, with a budget under 3000 RMB.",
        "Plan a 4-day Hangzhou trip for two retirees who dislike long walks, with a total budget of 5000 RMB and vegetarian meals.",
        "Plan a weekend in Xi'an for a college student on a 1200 RMB budget who loves history and street food.",
        "Plan a 5-day Yunnan trip for a photography enthusiast who wants sunrise spots and can spend at most 6000 RMB excluding flights.",
        "Plan a 2-day Shanghai visit for a wheelchair user and a companion, focusing on accessible museums, with a budget of 2500 RMB.",
    ],
    "Itinerary Logic & Flow": [
        "Design a 5-day Japan itinerary covering Tokyo, Kyoto, and Osaka with minimal backtracking.",
        "Design a 7-day Italy itinerary starting in Rome and ending in Milan by train, with no more than three hotel changes.",
        "Design a 3-day Beijing itinerary that covers the Forbidden City, the Great Wall at Mutianyu and the Summer Palace without rushing.",
        "Design a 6-day road trip around Iceland's south coast in winter, with daily driving under four hours.",
        "Design a 4-day Guilin and Yangshuo itinerary that combines a Li River cruise, cycling and one rest afternoon.",
    ],
    "Content Innovation": [
        "Recommend lesser-known attractions or local experiences in Florence for art lovers.",
        "Suggest off-the-beaten-path experiences in Lisbon for a traveler who has already seen the main sights.",
        "Recommend unusual food experiences in Chongqing for a visitor who enjoys spicy cuisine and local markets.",
        "Suggest hidden spots in Kyoto to enjoy autumn leaves while avoiding the biggest tourist crowds.",
        "Recommend local workshops or cultural activities in Chiang Mai for a family with teenagers.",
    ],
}

_STRENGTHS = ["addresses the main question directly", "uses a clear structure", "gives concrete details",
              "keeps a professional tone"]
_WEAKNESSES = ["omits some relevant specifics", "offers limited justification for its conclusions",
               "does not tailor the answer to every stated constraint", "is partly generic"]
_SUGGESTIONS = ["cite the exact provisions or sources relied on", "cover every constraint in the request explicitly",
                "add a short summary of recommended next steps", "replace generic advice with case-specific detail"]
_SCORE_SPREAD = (2, 3, 3, 3, 4, 4, 4, 4, 5, 5)


class MockResponders:
    """Role responders that read the rendered prompt and answer in contract format."""

    def __init__(self, seed: int = 0) -> None:
        self.seed = seed

    def annotator(self, messages: list[dict[str, str]]) -> str:
        prompt = _last_user(messages)
        desc = _section(prompt, "description")
        name = _field(prompt, "App name")
        hits = topic_hits(desc + " " + name)
        topic = max(sorted(hits), key=lambda t: hits[t])
        if hits[topic] > 0:
            label = TOPIC_LABELS[topic]
        else:
            words = [w for w in _WORD.findall(name.lower()) if len(w) > 2][:4]
            while len(words) < 2:
                words.append("assistant")
            label = " ".join(words)
        return fenced("label", {"label": label})

    def metric_generator(self, messages: list[dict[str, str]]) -> str:
        prompt = _last_user(messages)
        label = _field(prompt, "Label")
        count = int(re.search(r"exactly (\d+) evaluation metrics", prompt).group(1))
        metrics = SCENARIO_METRICS.get(label)
        if metrics is None:
            title = label.title()
            metrics = [
                {"name": f"{title} Accuracy", "definition": f"Whether answers about {label} are factually correct.",
                 "rubric": _rubric("Factual accuracy")},
                {"name": f"{title} Clarity", "definition": f"Whether answers about {label} are clear and well organized.",
                 "rubric": _rubric("Clarity and organization")},
                {"name": f"{title} Completeness", "definition": f"Whether answers about {label} cover every part of the request.",
                 "rubric": _rubric("Coverage of the request")},
            ]
        return "Here are the metrics.\n\n" + fenced("metrics", {"metrics": metrics[:count]})

    def task_generator(self, messages: list[dict[str, str]]) -> str:
        prompt = _last_user(messages)
        metric = _field(prompt, "Metric name")
        label = _field(prompt, "Label")
        count = int(re.search(r"Write (\d+) distinct requests", prompt).group(1))
        rejection = _field(prompt, "Previous rejection (address it if present)")
        bank = TASK_BANK.get(metric) or [
            f"As someone who needs help with {label}, what are the three most important things to check "
            f"before relying on an answer about {metric.lower()}, and why?",
            f"I am comparing two apps for {label}; describe a realistic scenario where {metric.lower()} "
            f"matters and explain what a good answer should contain.",
            f"Give a step-by-step example request about {label} that would expose weaknesses in "
            f"{metric.lower()}, including the details a user would provide.",
            f"Explain how a careful expert would handle a request about {label} where {metric.lower()} "
            f"is critical, with concrete details for a first-time user.",
        ]
        if rejection and rejection != "none":
            start = count + _h(self.seed, metric, rejection) % max(1, len(bank) - count)
            picks = [bank[(start + i) % len(bank)] for i in range(count)]
        else:
            picks = bank[:count]
        tasks = [{"prompt": p, "constraints": []} for p in picks]
        return fenced("tasks", {"tasks": tasks})

    def complexity_checker(self, messages: list[dict[str, str]]) -> str:
        task = _section(_last_user(messages), "task")
        if len(task.split()) >= 8 and len(task) >= 40:
            return fenced("verdict", {"verdict": "sufficient", "reason": "specific and answerable"})
        return fenced("verdict", {"verdict": "insufficient", "reason": "too_vague"})

    def judge(self, messages: list[dict[str, str]]) -> str:
        prompt = _last_user(messages)
        task, response = _section(prompt, "task"), _section(prompt, "response")
        h = _h(self.seed, "judge", task, response)
        score = 1 if response.startswith("[empty response") else _SCORE_SPREAD[h % len(_SCORE_SPREAD)]
        pick = lambda pool, salt: [pool[(h >> salt) % len(pool)]]  # noqa: E731
        return fenced("judgement", {
            "score": score,
            "strengths": pick(_STRENGTHS, 8),
            "weaknesses": pick(_WEAKNESSES, 16),
            "suggestions": pick(_SUGGESTIONS, 24),
        })

    def table(self) -> dict[Role, Any]:
        return {
            Role.ANNOTATOR: self.annotator,
            Role.METRIC_GENERATOR: self.metric_generator,
            Role.TASK_GENERATOR: self.task_generator,
            Role.COMPLEXITY_CHECKER: self.complexity_checker,
            Role.JUDGE: self.judge,
        }


_FILLER = ("according to the relevant rules the first step is to review the facts then compare the "
           "options carefully and keep written records of each decision so that the outcome can be "
           "checked later by you or an adviser").split()


class MockAppFleet:
    """Every ``mock:<id>`` endpoint becomes a deterministic simulated app.

    Each app has its own throughput (tokens per second) and answer length,
    derived from the seed and the endpoint.
    """

    def __init__(self, clock: VirtualClock, seed: int = 0, unreachable: frozenset[str] = frozenset()) -> None:
        self.clock = clock
        self.seed = seed
        self.unreachable = unreachable

    def throughput(self, endpoint: str) -> float:
        return 6.0 + (_h(self.seed, "speed", endpoint) % 2700) / 100.0  # 6.00 .. 32.99 tokens/s

    def send(self, endpoint: str, prompt: str, timeout_s: float) -> AppReply:
        if endpoint in self.unreachable:
            raise AppUnreachable(f"{endpoint} is not reachable")
        h = _h(self.seed, "reply", endpoint, prompt)
        n = 60 + h % 140
        words = [_FILLER[(h + i) % len(_FILLER)] for i in range(n)]
        text = f"[{endpoint}] " + " ".join(words) + "."
        tokens = len(text.split())
        self.clock.advance(round(tokens / self.throughput(endpoint), 6))
        return AppReply(text, tokens)


def build_mock(seed: int = 0, clock: VirtualClock | None = None,
               chat_latency_s: float = 0.5) -> tuple[MockProvider, MockAppFleet, VirtualClock]:
    clock = clock or VirtualClock()
    provider = MockProvider(MockResponders(seed).table(), embedder=topic_embedding,
                            latency_s=chat_latency_s, clock=clock)
    return provider, MockAppFleet(clock, seed), clock
