import pytest

from tablecrew.errors import (
    CompatibilityBroken,
    NotResolvable,
    RepairFailed,
    SynthesisFailed,
)
from tablecrew.skills.bank import SkillBank, append_skill, new_skill
from tablecrew.skills.model import render_skill_document
from tablecrew.skills.resolver import (
    LexicalOverlapScorer,
    ResolveConfig,
    SkillCreator,
    create_skill,
    evolve_skill,
    repair_skill,
    resolve_skill,
)


class ListBackend:
    """Returns queued responses in order, repeating the last one."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    def generate(self, prompt, **kwargs):
        self.calls += 1
        idx = min(self.calls - 1, len(self.responses) - 1)
        return self.responses[idx]


@pytest.fixture
def bank(tmp_path):
    b = SkillBank(tmp_path / "bank")
    append_skill(b, new_skill(
        name="tour-extraction", kind="knowledge",
        description="extract concert tour dates and venues from fan archives",
        body="Search for the tour name plus the word dates; read the archive table.",
        created_by="test",
    ))
    append_skill(b, new_skill(
        name="price-tracker", kind="knowledge",
        description="track product prices across shops",
        body="Check price history sites.",
        created_by="test",
    ))
    append_skill(b, new_skill(
        name="gap-audit", kind="knowledge",
        description="audit coverage gaps in peer outputs",
        body="Compare delivered rows against targets.",
        created_by="test",
    ))
    return b


def test_stage1_exact_name_match(bank):
    skill = resolve_skill(bank, "tour-extraction")
    assert skill.name == "tour-extraction"


def test_stage1_match_is_casefolded(bank):
    assert resolve_skill(bank, "Tour-Extraction").name == "tour-extraction"


def test_stage1_beats_high_scoring_decoy(tmp_path):
    bank = SkillBank(tmp_path / "bank")
    append_skill(bank, new_skill(
        name="task-router", kind="knowledge", description="unrelated routing note",
        body="nothing in common with the query", created_by="test",
    ))
    append_skill(bank, new_skill(
        name="decoy", kind="knowledge",
        description="task-router task-router task-router",
        body="task-router task-router task-router task-router",
        created_by="test",
    ))
    assert resolve_skill(bank, "task-router").name == "task-router"


def test_stage2_hybrid_retrieval_fused_winner(bank):
    skill = resolve_skill(bank, "extract concert dates")
    assert skill.name == "tour-extraction"


def test_stage2_cross_scorer_reranks(bank):
    config = ResolveConfig(cross_scorer=LexicalOverlapScorer())
    skill = resolve_skill(bank, "extract concert dates", config=config)
    assert skill.name == "tour-extraction"


def test_remote_tier_searched_in_stage2(tmp_path, bank):
    remote = SkillBank(tmp_path / "remote")
    append_skill(remote, new_skill(
        name="venue-geocoder", kind="knowledge",
        description="geocode venue names into coordinates on maps",
        body="Use the venue name and city to geocode coordinates latitude longitude.",
        created_by="test",
    ))
    remote.freeze()
    skill = resolve_skill(bank, "geocode venue coordinates", remote=remote)
    assert skill.name == "venue-geocoder"


def test_not_resolvable_on_empty_bank(tmp_path):
    bank = SkillBank(tmp_path / "empty")
    with pytest.raises(NotResolvable):
        resolve_skill(bank, "anything at all")


def _function_doc(name="csv-sorter", entry="csv-sorter", args=("--path",), body="print('ok')\n"):
    skill = new_skill(name=name, kind="function", description="sorts csv rows",
                      body=body, created_by="backend", entry=entry, args=list(args))
    return render_skill_document(skill)


def test_creator_synthesises_on_empty_bank(tmp_path):
    bank = SkillBank(tmp_path / "empty")
    creator = SkillCreator(backend=ListBackend([_function_doc()]), kind="function")
    skill = resolve_skill(bank, "sort csv rows", creator=creator)
    assert skill.name == "csv-sorter"
    assert bank.has("csv-sorter")
    assert bank.latest("csv-sorter").version == 1


def test_create_skill_rejects_unbalanced_script(tmp_path):
    bank = SkillBank(tmp_path / "empty")
    backend = ListBackend([_function_doc(body="def broken(:\n")])
    with pytest.raises(SynthesisFailed):
        create_skill("sort csv rows", "function", backend, retries=1, bank=bank)
    assert bank.names() == []


def test_create_skill_recovers_after_bad_attempt(tmp_path):
    bank = SkillBank(tmp_path / "empty")
    backend = ListBackend([_function_doc(body="def broken(:\n"), _function_doc()])
    skill = create_skill("sort csv rows", "function", backend, retries=1, bank=bank)
    assert skill.name == "csv-sorter"
    assert backend.calls == 2


def test_create_knowledge_missing_description_rejected(tmp_path):
    bank = SkillBank(tmp_path / "empty")
    doc = "---\nname: bad-skill\nkind: knowledge\nversion: 1\n---\nbody"
    with pytest.raises(SynthesisFailed):
        create_skill("take notes", "knowledge", ListBackend([doc]), retries=0, bank=bank)


def test_repair_appends_new_version_keeps_old(bank):
    append_skill(bank, new_skill(
        name="fetch-helper", kind="function", description="fetches pages",
        body="raise RuntimeError('always fails')\n", created_by="test",
        entry="fetch-helper", args=["--url"],
    ))
    backend = ListBackend(["def broken(:\n", "print('fixed')\n"])
    repaired = repair_skill(bank, "fetch-helper", "RuntimeError: always fails", backend, retries=2)
    assert repaired.version == 2
    assert bank.latest("fetch-helper").body == "print('fixed')\n"
    assert bank.get_version("fetch-helper", 1).body == "raise RuntimeError('always fails')\n"


def test_repair_failure_leaves_bank_unchanged(bank):
    append_skill(bank, new_skill(
        name="fetch-helper", kind="function", description="fetches pages",
        body="print('v1')\n", created_by="test", entry="fetch-helper", args=["--url"],
    ))
    before = bank.snapshot()
    backend = ListBackend(["def broken(:\n"])
    with pytest.raises(RepairFailed):
        repair_skill(bank, "fetch-helper", "trace", backend, retries=1)
    assert bank.snapshot() == before
    assert bank.latest("fetch-helper").version == 1


def test_repair_requires_nonempty_trace(bank):
    with pytest.raises(ValueError):
        repair_skill(bank, "tour-extraction", "   ", ListBackend(["x"]))


def test_repair_knowledge_preserves_name(bank):
    backend = ListBackend(["Updated: search the venue archive first."])
    repaired = repair_skill(bank, "tour-extraction", "stale guidance", backend)
    assert repaired.name == "tour-extraction"
    assert repaired.version == 2
    assert repaired.body == "Updated: search the venue archive first."


def _seed_function(bank):
    append_skill(bank, new_skill(
        name="csv-sorter", kind="function", description="sorts csv rows",
        body="print('v1')\n", created_by="test", entry="csv-sorter", args=["--path"],
    ))


def test_evolve_accepts_added_optional_argument(bank):
    _seed_function(bank)
    doc = _function_doc(args=("--path", "--reverse"), body="print('v2')\n")
    evolved = evolve_skill(bank, "csv-sorter", "support reverse order", ListBackend([doc]))
    assert evolved.version == 2
    assert set(evolved.arg_manifest) == {"--path", "--reverse"}


def test_evolve_rejects_dropped_argument(bank):
    _seed_function(bank)
    doc = _function_doc(args=(), body="print('v2')\n")
    with pytest.raises(CompatibilityBroken):
        evolve_skill(bank, "csv-sorter", "simplify", ListBackend([doc]))
    assert bank.latest("csv-sorter").version == 1


def test_evolve_rejects_renamed_entry(bank):
    _seed_function(bank)
    doc = _function_doc(entry="sort-csv", args=("--path",))
    with pytest.raises(CompatibilityBroken):
        evolve_skill(bank, "csv-sorter", "rename", ListBackend([doc]))
