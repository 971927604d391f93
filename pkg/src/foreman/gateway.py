"""Prompt assembly and chat-completion transport for the two LLM roles.

Prompts are structured, not free-form prose: commented blocks, key-value
rosters, and explicit do/don't rules, byte-stable for equal inputs.  The
transport speaks the OpenAI-compatible chat-completions shape; a canned
mock provider keyed by (role, scenario, iteration) makes every workflow
runnable fully offline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger(__name__)

from .plan import Plan, SchemaError, parse_plan, serialize_plan
from .scenario import PromptContext, Scenario, canonical_context
from .validator import ViolationReport


class GatewayError(Exception):
    """kind: transport | auth | rate-limit | malformed-response"""

    def __init__(self, kind: str, reason: str):
        super().__init__(f"{kind}: {reason}")
        self.kind = kind
        self.reason = reason


@dataclass(frozen=True)
class LlmProfile:
    name: str
    role: str  # "generator" | "supervisor"
    endpoint: str
    model_name: str
    temperature: float = 0.2
    max_tokens: int = 1024
    stop_tokens: tuple[str, ...] = ()
    api_key_env: str = ""
    seed: int | None = None

    def is_mock(self) -> bool:
        return self.endpoint.startswith("mock://")


def load_profiles(path: str | Path) -> dict[str, LlmProfile]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    out = {}
    for name, raw in doc.items():
        out[name] = LlmProfile(
            name=name,
            role=raw.get("role", "supervisor"),
            endpoint=raw["endpoint"],
            model_name=raw.get("model_name", name),
            temperature=float(raw.get("temperature", 0.2)),
            max_tokens=int(raw.get("max_tokens", 1024)),
            stop_tokens=tuple(raw.get("stop_tokens", [])),
            api_key_env=raw.get("api_key_env", ""),
            seed=raw.get("seed"),
        )
    return out


# ---------------------------------------------------------------------------
# Prompt templates
# ---------------------------------------------------------------------------

GENERATOR_RULES = (
    "respect precedence; do not duplicate actions; keep battery non-negative",
    "emit exactly one step per line in the API schema; no prose between steps",
    "charge only at a charging station; pick only at stockpiles",
)


def _section(title: str, body: str) -> str:
    return f"# --- {title} ---\n{body}\n"


def build_generator_prompt(ctx: PromptContext) -> str:
    """Deterministic generator prompt: context, roster, schema, rules, exemplars."""
    parts = [
        "# You are the schedule Generator for a construction robot team.",
        _section("BACKGROUND", ctx.background),
        _section("TASKS", ctx.task_text),
        _section("ROBOTS", ctx.roster),
        _section("API SCHEMA", ctx.api_schema),
        _section("RULES (do/don't)", "\n".join(f"- {r}" for r in GENERATOR_RULES + tuple(ctx.guardrails))),
    ]
    if ctx.few_shot:
        shots = []
        for i, (shot_ctx, shot_plan) in enumerate(ctx.few_shot, start=1):
            shots.append(f"## example {i}\n# context:\n{shot_ctx}\n# schedule:\n{shot_plan}")
        parts.append(_section("EXAMPLES", "\n".join(shots)))
    parts.append("# Emit the schedule now, one step per line:")
    return "\n".join(parts)


COUNTEREXAMPLE = (
    "# counterexample (reject plans like this):\n"
    "#   STEP 5, [S], PICK, [3], 3, [25]\n"
    "#   STEP 5, [S], PICK, [3], 3, [25]   <- duplicated step index"
)


def build_supervisor_prompt(ctx: PromptContext, draft: Plan, report: ViolationReport) -> str:
    """Supervisor prompt: draft, typed violations with fix hints, repair charter."""
    parts = [
        "# You are the schedule Supervisor. Check the draft against the scenario",
        "# and return a corrected schedule with the fewest possible edits",
        "# (substitute, reorder or insert steps; keep the original intent).",
        _section("BACKGROUND", ctx.background),
        _section("TASKS", ctx.task_text),
        _section("ROBOTS", ctx.roster),
        _section("API SCHEMA", ctx.api_schema),
        _section("DRAFT SCHEDULE", serialize_plan(draft).rstrip("\n")),
    ]
    if report.feasible:
        parts.append(_section("VALIDATION", "no violations found; confirm the draft verbatim"))
    else:
        blocks = "\n".join(v.render() for v in report.violations)
        parts.append(_section("TYPED VIOLATIONS", blocks))
        parts.append(COUNTEREXAMPLE)
    parts.append("# Emit the corrected schedule now, one step per line:")
    return "\n".join(parts)


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Response hygiene
# ---------------------------------------------------------------------------

_STEP_LINE = re.compile(r"^([A-Za-z_][\w+-]*\s*:\s*)?STEP\s+\d+\s*,", re.IGNORECASE)


def strip_plan_preamble(text: str) -> str:
    """Drop any prose before the first step line; idempotent."""
    lines = text.splitlines()
    for i, line in enumerate(lines):
        if _STEP_LINE.match(line.strip()):
            return "\n".join(lines[i:]) + "\n"
    return text


# ---------------------------------------------------------------------------
# Transport
# ---------------------------------------------------------------------------


class MockProvider:
    """Serves canned responses from a manifest keyed 'role::scenario::iteration'."""

    def __init__(self, mocks_dir: str | Path):
        self.mocks_dir = Path(mocks_dir)
        manifest_path = self.mocks_dir / "manifest.json"
        if not manifest_path.exists():
            raise GatewayError("malformed-response", f"no mock manifest at {manifest_path}")
        self.manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    def complete(self, key: tuple[str, str, int]) -> str:
        role, scenario, iteration = key
        for candidate in (f"{role}::{scenario}::{iteration}", f"{role}::{scenario}::1"):
            if candidate in self.manifest:
                return (self.mocks_dir / self.manifest[candidate]).read_text(encoding="utf-8")
        raise GatewayError(
            "malformed-response", f"no mock response for {role}::{scenario}::{iteration}"
        )


class Gateway:
    """Stateless per call; retries once on transport failure."""

    def __init__(self, mocks_dir: str | Path | None = None):
        self._mock = MockProvider(mocks_dir) if mocks_dir is not None else None

    def complete(
        self,
        profile: LlmProfile,
        prompt: str,
        mock_key: tuple[str, str, int] | None = None,
    ) -> str:
        log.info("completion: profile=%s role=%s prompt_chars=%d", profile.name, profile.role, len(prompt))
        if profile.is_mock():
            if self._mock is None:
                raise GatewayError("malformed-response", "mock profile but no mocks directory configured")
            if mock_key is None:
                raise GatewayError("malformed-response", "mock completion requires a (role, scenario, iteration) key")
            return self._mock.complete(mock_key)
        return self._http_complete(profile, prompt)

    def _http_complete(self, profile: LlmProfile, prompt: str) -> str:
        import requests

        headers = {"Content-Type": "application/json"}
        if profile.api_key_env:
            key = os.environ.get(profile.api_key_env, "")
            if not key:
                raise GatewayError("auth", f"env var {profile.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        payload: dict = {
            "model": profile.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": profile.temperature,
            "max_tokens": profile.max_tokens,
        }
        if profile.stop_tokens:
            payload["stop"] = list(profile.stop_tokens)
        if profile.seed is not None:
            payload["seed"] = profile.seed

        last_exc: Exception | None = None
        for _ in range(2):  # one retry on transport failure
            try:
                resp = requests.post(profile.endpoint, json=payload, headers=headers, timeout=60)
            except requests.RequestException as e:
                last_exc = e
                continue
            if resp.status_code in (401, 403):
                raise GatewayError("auth", f"endpoint returned {resp.status_code}")
            if resp.status_code == 429:
                raise GatewayError("rate-limit", "endpoint returned 429")
            if resp.status_code >= 400:
                raise GatewayError("transport", f"endpoint returned {resp.status_code}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, ValueError) as e:
                raise GatewayError("malformed-response", str(e)) from None
        raise GatewayError("transport", f"request failed twice: {last_exc}")


def supervise_with_llm(
    s: Scenario,
    draft: Plan,
    report: ViolationReport,
    gateway: Gateway,
    profile: LlmProfile,
    scenario_name: str,
    iteration: int = 1,
) -> Plan:
    """One supervisor exchange: prompt, complete, strip, parse.

    An unparseable response triggers a single re-prompt carrying the parse
    error; a second failure surfaces as SchemaError (the repair loop counts
    it as a failed iteration).
    """
    ctx = canonical_context(s)
    prompt = build_supervisor_prompt(ctx, draft, report)
    key = (profile.name, scenario_name, iteration)
    raw = gateway.complete(profile, prompt, mock_key=key)
    try:
        return parse_plan(strip_plan_preamble(raw))
    except SchemaError as first:
        retry_prompt = (
            prompt
            + f"\n# Your previous response failed to parse ({first}).\n"
            + "# Emit only schedule lines in the API schema, nothing else:"
        )
        raw = gateway.complete(profile, retry_prompt, mock_key=key)
        return parse_plan(strip_plan_preamble(raw))
