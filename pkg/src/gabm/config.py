"""Scenario configuration: schema, validation, and wiring.

A scenario file is JSON.  ``load_config`` either returns a validated
ScenarioConfig or raises ConfigValidationError carrying every problem
found, each tagged UnresolvedReference (a name points at nothing) or
MalformedField (a value has the wrong shape) with the offending path.
``build`` turns a validated config into live objects ready to run.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .agent import (
    AgentComponent,
    ConstantComponent,
    GenerativeAgent,
    ModelQueryComponent,
    ObservationBuffer,
    three_questions_components,
)
from .errors import ConfigIssue, ConfigValidationError, SimulationError
from .game_master import (
    DEFAULT_GM_PREAMBLE,
    GameMaster,
    GMComponent,
    ObservationDelivery,
    PhraseTerminator,
)
from .genesis import AgentProfile, generate_and_seed
from .grounding import InventoryComponent, LocationComponent, Questionnaire
from .kernel import (
    ActionSpec,
    ClockMode,
    DEFAULT_CALL_TO_ACTION,
    GameClock,
    OutputKind,
    canonical_json,
    parse_time,
)
from .memory import HashEmbedder, MemoryBank
from .model import EchoModel, GenerativeModel, HttpModel, ScriptedModel
from .phone import CalendarApp, PhoneUniverse, SceneTrigger

ENGINE_VERSION = "0.1.0"

MODEL_KINDS = ("scripted", "echo", "http")
CLOCK_MODES = {"round": ClockMode.ADVANCE_PER_ROUND, "player": ClockMode.ADVANCE_PER_PLAYER}
AGENT_COMPONENT_TYPES = ("constant", "observations", "model_query", "three_questions")
GM_COMPONENT_TYPES = (
    "inventory",
    "locations",
    "scene_trigger",
    "phrase_terminator",
    "observation_delivery",
)
APP_KINDS = ("calendar",)
TOP_LEVEL_KEYS = {
    "seed",
    "max_steps",
    "clock",
    "model",
    "script",
    "action_spec",
    "agents",
    "gm",
    "apps",
    "phones",
    "scene",
    "questionnaires",
}


@dataclass
class ScenarioConfig:
    """A parsed and validated scenario, hash-stable for trace headers."""

    raw: dict
    base_dir: Path
    path: Path | None = None

    def canonical(self) -> str:
        return canonical_json(self.raw)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def max_steps(self) -> int:
        return self.raw["max_steps"]

    def script_path(self) -> Path | None:
        script = self.raw.get("script")
        return (self.base_dir / script) if script else None


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


class _Validator:
    def __init__(self, raw: dict, base_dir: Path, check_files: bool = True):
        self.raw = raw
        self.base_dir = base_dir
        self.check_files = check_files
        self.issues: list[ConfigIssue] = []

    def malformed(self, path: str, message: str) -> None:
        self.issues.append(ConfigIssue("MalformedField", path, message))

    def unresolved(self, path: str, message: str) -> None:
        self.issues.append(ConfigIssue("UnresolvedReference", path, message))

    def run(self) -> list[ConfigIssue]:
        raw = self.raw
        if not isinstance(raw, dict):
            self.malformed("$", "config must be a JSON object")
            return self.issues
        for key in raw:
            if key not in TOP_LEVEL_KEYS:
                self.malformed(key, "unknown field")
        self._check_seed()
        self._check_max_steps()
        self._check_clock()
        self._check_model()
        self._check_action_spec("action_spec", raw.get("action_spec"))
        agent_names = self._check_agents()
        self._check_gm(agent_names)
        app_names = self._check_apps()
        self._check_phones(agent_names, app_names)
        self._check_scene()
        self._check_questionnaires()
        return self.issues

    def _check_seed(self) -> None:
        seed = self.raw.get("seed")
        if seed is None:
            self.malformed("seed", "required")
        elif not _is_int(seed) or not (0 <= seed < 2**64):
            self.malformed("seed", "must be an integer in [0, 2^64)")

    def _check_max_steps(self) -> None:
        steps = self.raw.get("max_steps")
        if steps is None:
            self.malformed("max_steps", "required")
        elif not _is_int(steps) or steps < 1:
            self.malformed("max_steps", "must be a positive integer")

    def _check_clock(self) -> None:
        clock = self.raw.get("clock")
        if not isinstance(clock, dict):
            self.malformed("clock", "required object with start, step_minutes, mode")
            return
        start = clock.get("start")
        if not isinstance(start, str):
            self.malformed("clock.start", "required ISO minute timestamp")
        else:
            try:
                parse_time(start)
            except ValueError:
                self.malformed("clock.start", f"not an ISO minute timestamp: {start!r}")
        step = clock.get("step_minutes")
        if not _is_int(step) or step < 0:
            self.malformed("clock.step_minutes", "must be a non-negative integer")
        mode = clock.get("mode", "round")
        if mode not in CLOCK_MODES:
            self.malformed("clock.mode", f"must be one of {sorted(CLOCK_MODES)}")

    def _check_model(self) -> None:
        model = self.raw.get("model")
        if not isinstance(model, dict):
            self.malformed("model", "required object with kind")
            return
        kind = model.get("kind")
        if kind not in MODEL_KINDS:
            self.malformed("model.kind", f"must be one of {list(MODEL_KINDS)}")
        script = self.raw.get("script")
        if script is not None:
            if not isinstance(script, str):
                self.malformed("script", "must be a path string")
            elif self.check_files and not (self.base_dir / script).is_file():
                self.unresolved("script", f"script file not found: {script}")

    def _check_action_spec(self, path: str, spec) -> None:
        if spec is None:
            return
        if not isinstance(spec, dict):
            self.malformed(path, "must be an object")
            return
        if not isinstance(spec.get("call_to_action"), str) or not spec.get("call_to_action"):
            self.malformed(f"{path}.call_to_action", "required non-empty string")
        kind = spec.get("output_kind", "free")
        if kind not in ("free", "choice", "float"):
            self.malformed(f"{path}.output_kind", "must be free, choice, or float")
        options = spec.get("options", [])
        if not isinstance(options, list) or not all(isinstance(o, str) for o in options):
            self.malformed(f"{path}.options", "must be a list of strings")
        elif kind == "choice":
            if len(options) < 2 or len(set(options)) != len(options):
                self.malformed(f"{path}.options", "choice needs at least two distinct options")
        elif options:
            self.malformed(f"{path}.options", f"{kind} takes no options")

    def _check_agents(self) -> set[str]:
        agents = self.raw.get("agents")
        names: set[str] = set()
        if not isinstance(agents, list) or not agents:
            self.malformed("agents", "required non-empty list")
            return names
        for i, agent in enumerate(agents):
            path = f"agents[{i}]"
            if not isinstance(agent, dict):
                self.malformed(path, "must be an object")
                continue
            name = agent.get("name")
            if not isinstance(name, str) or not name:
                self.malformed(f"{path}.name", "required non-empty string")
                continue
            if name in names:
                self.malformed(f"{path}.name", f"duplicate agent name {name!r}")
            names.add(name)
            memories = agent.get("initial_memories", [])
            if not isinstance(memories, list) or not all(isinstance(m, str) for m in memories):
                self.malformed(f"{path}.initial_memories", "must be a list of strings")
            profile = agent.get("profile")
            if profile is not None:
                if not isinstance(profile, dict):
                    self.malformed(f"{path}.profile", "must be an object")
                else:
                    age = profile.get("age")
                    if not _is_int(age) or age <= 0:
                        self.malformed(f"{path}.profile.age", "must be a positive integer")
                    traits = profile.get("traits", [])
                    if not isinstance(traits, list) or not all(isinstance(t, str) for t in traits):
                        self.malformed(f"{path}.profile.traits", "must be a list of strings")
            self._check_agent_components(path, agent, name)
        return names

    def _check_agent_components(self, path: str, agent: dict, agent_name: str) -> None:
        components = agent.get("components", [])
        if not isinstance(components, list):
            self.malformed(f"{path}.components", "must be a list")
            return
        declared: list[str] = []
        for j, comp in enumerate(components):
            cpath = f"{path}.components[{j}]"
            if not isinstance(comp, dict):
                self.malformed(cpath, "must be an object")
                continue
            ctype = comp.get("type")
            if ctype not in AGENT_COMPONENT_TYPES:
                self.malformed(f"{cpath}.type", f"must be one of {list(AGENT_COMPONENT_TYPES)}")
                continue
            if ctype == "constant":
                if not isinstance(comp.get("name"), str) or not comp.get("name"):
                    self.malformed(f"{cpath}.name", "required non-empty string")
                if not isinstance(comp.get("text"), str):
                    self.malformed(f"{cpath}.text", "required string")
                declared.append(comp.get("name", ""))
            elif ctype == "observations":
                declared.append(comp.get("name", "recent observations"))
            elif ctype == "model_query":
                if not isinstance(comp.get("name"), str) or not comp.get("name"):
                    self.malformed(f"{cpath}.name", "required non-empty string")
                if not isinstance(comp.get("question"), str) or not comp.get("question"):
                    self.malformed(f"{cpath}.question", "required non-empty string")
                retrieval = comp.get("retrieval", "recent")
                if retrieval not in ("recent", "associative", "none"):
                    self.malformed(f"{cpath}.retrieval", "must be recent, associative, or none")
                declared.append(comp.get("name", ""))
            elif ctype == "three_questions":
                declared.extend(["situation", "identity", "disposition"])
        for j, comp in enumerate(components):
            if not isinstance(comp, dict) or comp.get("type") != "model_query":
                continue
            reads = comp.get("reads", [])
            if not isinstance(reads, list):
                self.malformed(f"{path}.components[{j}].reads", "must be a list")
                continue
            for read in reads:
                if read not in declared:
                    self.unresolved(
                        f"{path}.components[{j}].reads",
                        f"agent {agent_name!r} declares no component {read!r}",
                    )

    def _check_gm(self, agent_names: set[str]) -> None:
        gm = self.raw.get("gm", {})
        if not isinstance(gm, dict):
            self.malformed("gm", "must be an object")
            return
        components = gm.get("components", [])
        if not isinstance(components, list):
            self.malformed("gm.components", "must be a list")
            return
        for i, comp in enumerate(components):
            path = f"gm.components[{i}]"
            if not isinstance(comp, dict):
                self.malformed(path, "must be an object")
                continue
            ctype = comp.get("type")
            if ctype not in GM_COMPONENT_TYPES:
                self.malformed(f"{path}.type", f"must be one of {list(GM_COMPONENT_TYPES)}")
                continue
            if ctype == "inventory":
                endowments = comp.get("endowments", {})
                if not isinstance(endowments, dict):
                    self.malformed(f"{path}.endowments", "must be an object")
                    continue
                for player, holdings in endowments.items():
                    if player not in agent_names:
                        self.unresolved(
                            f"{path}.endowments.{player}", f"no agent named {player!r}"
                        )
                    if not isinstance(holdings, dict):
                        self.malformed(f"{path}.endowments.{player}", "must be an object")
                        continue
                    for item, qty in holdings.items():
                        if not isinstance(qty, (int, float, str)) or isinstance(qty, bool):
                            self.malformed(
                                f"{path}.endowments.{player}.{item}", "must be a quantity"
                            )
            elif ctype == "locations":
                locations = comp.get("locations", {})
                if not isinstance(locations, dict):
                    self.malformed(f"{path}.locations", "must be an object")
                    continue
                for player, label in locations.items():
                    if player not in agent_names:
                        self.unresolved(f"{path}.locations.{player}", f"no agent named {player!r}")
                    if not isinstance(label, str) or not label:
                        self.malformed(f"{path}.locations.{player}", "must be a non-empty string")
            elif ctype == "phrase_terminator":
                if not isinstance(comp.get("phrase"), str) or not comp.get("phrase"):
                    self.malformed(f"{path}.phrase", "required non-empty string")

    def _check_apps(self) -> set[str]:
        apps = self.raw.get("apps", [])
        names: set[str] = set()
        if not isinstance(apps, list):
            self.malformed("apps", "must be a list")
            return names
        for i, app in enumerate(apps):
            path = f"apps[{i}]"
            if not isinstance(app, dict):
                self.malformed(path, "must be an object")
                continue
            if app.get("kind") not in APP_KINDS:
                self.malformed(f"{path}.kind", f"must be one of {list(APP_KINDS)}")
            name = app.get("name", app.get("kind"))
            if not isinstance(name, str) or not name:
                self.malformed(f"{path}.name", "must be a non-empty string")
                continue
            if name in names:
                self.malformed(f"{path}.name", f"duplicate app name {name!r}")
            names.add(name)
        return names

    def _check_phones(self, agent_names: set[str], app_names: set[str]) -> None:
        phones = self.raw.get("phones", {})
        if not isinstance(phones, dict):
            self.malformed("phones", "must be an object of owner -> app names")
            return
        for owner, apps in phones.items():
            if owner not in agent_names:
                self.unresolved(f"phones.{owner}", f"no agent named {owner!r}")
            if not isinstance(apps, list) or not all(isinstance(a, str) for a in apps):
                self.malformed(f"phones.{owner}", "must be a list of app names")
                continue
            for app in apps:
                if app not in app_names:
                    self.unresolved(f"phones.{owner}", f"no app named {app!r}")

    def _check_scene(self) -> None:
        scene = self.raw.get("scene")
        if scene is None:
            return
        if not isinstance(scene, dict):
            self.malformed("scene", "must be an object")
            return
        minutes = scene.get("minutes", 30)
        if not _is_int(minutes) or minutes < 0:
            self.malformed("scene.minutes", "must be a non-negative integer")
        max_actions = scene.get("max_actions", 5)
        if not _is_int(max_actions) or max_actions < 1:
            self.malformed("scene.max_actions", "must be a positive integer")

    def _check_questionnaires(self) -> None:
        questionnaires = self.raw.get("questionnaires", [])
        if not isinstance(questionnaires, list):
            self.malformed("questionnaires", "must be a list")
            return
        for i, battery in enumerate(questionnaires):
            path = f"questionnaires[{i}]"
            if not isinstance(battery, dict):
                self.malformed(path, "must be an object")
                continue
            if not isinstance(battery.get("name"), str) or not battery.get("name"):
                self.malformed(f"{path}.name", "required non-empty string")
            questions = battery.get("questions")
            if not isinstance(questions, list) or not questions:
                self.malformed(f"{path}.questions", "required non-empty list")
                continue
            for j, question in enumerate(questions):
                self._check_action_spec(f"{path}.questions[{j}]", question)


def validate_config(raw: dict, base_dir: Path, check_files: bool = True) -> list[ConfigIssue]:
    return _Validator(raw, base_dir, check_files).run()


def load_config(path: str | Path) -> ScenarioConfig:
    """Parse and validate a scenario file; every problem is reported at once."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigValidationError(
            [ConfigIssue("MalformedField", str(path), f"cannot read config: {exc}")]
        ) from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError(
            [ConfigIssue("MalformedField", str(path), f"not valid JSON: {exc}")]
        ) from exc
    base_dir = path.parent
    issues = validate_config(raw, base_dir)
    if issues:
        raise ConfigValidationError(issues)
    return ScenarioConfig(raw=raw, base_dir=base_dir, path=path)


def config_from_dict(raw: dict, base_dir: str | Path = ".", check_files: bool = True) -> ScenarioConfig:
    """Validate an in-memory config dict (e.g. one embedded in a trace)."""
    base_dir = Path(base_dir)
    issues = validate_config(raw, base_dir, check_files)
    if issues:
        raise ConfigValidationError(issues)
    return ScenarioConfig(raw=raw, base_dir=base_dir)


@dataclass
class BuiltScenario:
    """Live objects wired from one config, ready for run_episode."""

    config: ScenarioConfig
    gm: GameMaster
    model: GenerativeModel
    players: list[GenerativeAgent]
    universe: PhoneUniverse | None = None
    questionnaires: list[tuple[Questionnaire, bool]] = field(default_factory=list)
    seed: int = 0
    max_steps: int = 1


def _build_action_spec(spec: dict | None) -> ActionSpec:
    if spec is None:
        return ActionSpec(DEFAULT_CALL_TO_ACTION)
    return ActionSpec(
        call_to_action=spec["call_to_action"],
        output_kind=OutputKind(spec.get("output_kind", "free")),
        options=tuple(spec.get("options", ())),
    )


def _build_agent_components(component_configs: list[dict]) -> list[AgentComponent]:
    components: list[AgentComponent] = []
    for comp in component_configs:
        ctype = comp["type"]
        if ctype == "constant":
            components.append(ConstantComponent(comp["name"], comp["text"]))
        elif ctype == "observations":
            components.append(
                ObservationBuffer(
                    name=comp.get("name", "recent observations"),
                    max_items=comp.get("max_items", 20),
                )
            )
        elif ctype == "model_query":
            components.append(
                ModelQueryComponent(
                    name=comp["name"],
                    question=comp["question"],
                    retrieval=comp.get("retrieval", "recent"),
                    k=comp.get("k", 25),
                    query_text=comp.get("query_text"),
                    reads=tuple(comp.get("reads", ())),
                    cadence=comp.get("cadence", "step"),
                    initial_state=comp.get("initial_state", ""),
                )
            )
        elif ctype == "three_questions":
            components.extend(three_questions_components(k=comp.get("k", 25)))
    return components


def build_model(config: ScenarioConfig, script_override: str | Path | None = None) -> GenerativeModel:
    kind = config.raw["model"]["kind"]
    if kind == "scripted":
        script = Path(script_override) if script_override else config.script_path()
        if script is not None:
            return ScriptedModel.from_file(str(script))
        return ScriptedModel()
    if kind == "echo":
        return EchoModel()
    return HttpModel()


def build(
    config: ScenarioConfig,
    model: GenerativeModel | None = None,
    script_override: str | Path | None = None,
    seed_override: int | None = None,
    max_steps_override: int | None = None,
) -> BuiltScenario:
    """Wire a validated config into a GameMaster and friends."""
    raw = config.raw
    seed = seed_override if seed_override is not None else config.seed
    max_steps = max_steps_override if max_steps_override is not None else config.max_steps
    if model is None:
        model = build_model(config, script_override)

    clock_cfg = raw["clock"]
    clock = GameClock(
        current_time=parse_time(clock_cfg["start"]),
        step_minutes=clock_cfg["step_minutes"],
        mode=CLOCK_MODES[clock_cfg.get("mode", "round")],
    )

    players: list[GenerativeAgent] = []
    for agent_cfg in raw["agents"]:
        bank = MemoryBank(embedder=HashEmbedder())
        agent = GenerativeAgent(
            name=agent_cfg["name"],
            model=model,
            memory=bank,
            components=_build_agent_components(agent_cfg.get("components", [])),
            clock=clock,
        )
        profile_cfg = agent_cfg.get("profile")
        if profile_cfg is not None:
            profile = AgentProfile(
                name=agent.name,
                age=profile_cfg["age"],
                traits=tuple(profile_cfg.get("traits", ())),
                context=profile_cfg.get("context", ""),
            )
            generate_and_seed(profile, model, bank, clock.current_time)
        for text in agent_cfg.get("initial_memories", []):
            bank.add(text, clock.current_time)
        players.append(agent)

    universe: PhoneUniverse | None = None
    apps_cfg = raw.get("apps", [])
    phones_cfg = raw.get("phones", {})
    scene_cfg = raw.get("scene", {})
    needs_universe = bool(apps_cfg or phones_cfg or scene_cfg) or any(
        comp.get("type") == "scene_trigger" for comp in raw.get("gm", {}).get("components", [])
    )
    if needs_universe:
        universe = PhoneUniverse(
            scene_minutes=scene_cfg.get("minutes", 30),
            max_actions=scene_cfg.get("max_actions", 5),
            child_step_minutes=scene_cfg.get("child_step_minutes", 1),
        )
        for app_cfg in apps_cfg:
            if app_cfg["kind"] == "calendar":
                universe.register_app(CalendarApp(name=app_cfg.get("name", "calendar")))
        for owner, app_names in phones_cfg.items():
            universe.give_phone(owner, app_names)

    gm_components: list[GMComponent] = []
    has_delivery = False
    for comp in raw.get("gm", {}).get("components", []):
        ctype = comp["type"]
        if ctype == "inventory":
            gm_components.append(
                InventoryComponent(
                    endowments=comp.get("endowments", {}),
                    items=comp.get("items"),
                    name=comp.get("name", "inventory"),
                )
            )
        elif ctype == "locations":
            gm_components.append(
                LocationComponent(comp.get("locations", {}), name=comp.get("name", "locations"))
            )
        elif ctype == "scene_trigger":
            assert universe is not None
            gm_components.append(SceneTrigger(universe, name=comp.get("name", "phone scene trigger")))
        elif ctype == "phrase_terminator":
            gm_components.append(
                PhraseTerminator(comp["phrase"], name=comp.get("name", "episode end watcher"))
            )
        elif ctype == "observation_delivery":
            gm_components.append(ObservationDelivery(name=comp.get("name", "observation delivery")))
            has_delivery = True
    if not has_delivery:
        gm_components.append(ObservationDelivery())

    gm = GameMaster(
        model=model,
        players=players,
        clock=clock,
        components=gm_components,
        action_spec=_build_action_spec(raw.get("action_spec")),
        preamble=raw.get("gm", {}).get("preamble") or DEFAULT_GM_PREAMBLE,
        rng=random.Random(seed),
    )
    if universe is not None:
        universe.attach(gm)

    questionnaires: list[tuple[Questionnaire, bool]] = []
    for battery in raw.get("questionnaires", []):
        questions = [_build_action_spec(q) for q in battery["questions"]]
        questionnaires.append(
            (Questionnaire(battery["name"], questions), bool(battery.get("administer_at_end")))
        )

    return BuiltScenario(
        config=config,
        gm=gm,
        model=model,
        players=players,
        universe=universe,
        questionnaires=questionnaires,
        seed=seed,
        max_steps=max_steps,
    )
