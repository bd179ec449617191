import pytest

from tablecrew.errors import BankFrozen, SyntaxInvalid, UnknownSkill, VersionConflict
from tablecrew.skills.bank import SkillBank, append_skill, new_skill
from tablecrew.skills.model import (
    Skill,
    parse_skill_document,
    render_skill_document,
    validate_skill,
)


@pytest.fixture
def bank(tmp_path):
    return SkillBank(tmp_path / "bank")


def knowledge(name="note-taking", version=1, body="# Notes\nTake notes.") -> Skill:
    return new_skill(name=name, kind="knowledge", description="keeps notes",
                     body=body, created_by="test", version=version)


def function_skill(name="row-counter", version=1, body="print('rows')\n") -> Skill:
    return new_skill(name=name, kind="function", description="counts rows",
                     body=body, created_by="test", version=version,
                     entry="row-counter", args=["--path"])


def test_document_round_trip():
    skill = function_skill()
    doc = render_skill_document(skill)
    parsed = parse_skill_document(doc)
    assert parsed.name == skill.name
    assert parsed.version == 1
    assert parsed.body == skill.body
    assert parsed.entry == "row-counter"
    assert parsed.arg_manifest == ("--path",)


def test_parse_rejects_missing_frontmatter_key():
    doc = "---\nname: x-skill\nkind: knowledge\nversion: 1\n---\nbody"
    with pytest.raises(SyntaxInvalid):
        parse_skill_document(doc)


def test_validate_function_requires_parsing_body():
    bad = function_skill(body="def broken(:\n")
    with pytest.raises(SyntaxInvalid):
        validate_skill(bad)


def test_skill_name_must_be_kebab():
    with pytest.raises(ValueError):
        Skill(name="Bad Name", kind="knowledge", description="d", version=1, body="b")


def test_append_new_skill_searchable_immediately(bank):
    append_skill(bank, knowledge())
    assert bank.has("note-taking")
    assert bank.bm25_top_n("notes", 3)[0][0] == "note-taking"
    assert (bank.root / "note-taking" / "SKILL.md").exists()


def test_append_same_version_conflicts(bank):
    append_skill(bank, knowledge())
    with pytest.raises(VersionConflict):
        append_skill(bank, knowledge(version=1))


def test_append_next_version_keeps_prior_on_disk(bank):
    append_skill(bank, knowledge())
    append_skill(bank, knowledge(version=2, body="# Notes v2"))
    assert bank.latest("note-taking").version == 2
    assert (bank.root / "note-taking" / "SKILL.v1.md").exists()
    assert bank.get_version("note-taking", 1).body == "# Notes\nTake notes."


def test_new_skill_must_start_at_version_one(bank):
    with pytest.raises(VersionConflict):
        append_skill(bank, knowledge(version=3))


def test_append_function_with_bad_syntax_writes_nothing(bank):
    with pytest.raises(SyntaxInvalid):
        append_skill(bank, function_skill(body="def broken(:\n"))
    assert not (bank.root / "row-counter").exists()


def test_snapshot_grows_monotonically(bank):
    s0 = bank.snapshot()
    append_skill(bank, knowledge())
    s1 = bank.snapshot()
    append_skill(bank, knowledge(version=2, body="v2"))
    s2 = bank.snapshot()
    append_skill(bank, function_skill())
    s3 = bank.snapshot()
    assert s0 <= s1 <= s2 <= s3
    assert len(s3) == 3  # v1 + v2 + function v1


def test_frozen_bank_rejects_appends(bank):
    append_skill(bank, knowledge())
    bank.freeze()
    with pytest.raises(BankFrozen):
        append_skill(bank, knowledge(version=2))
    assert bank.frozen


def test_content_hash_stable_and_sensitive(bank):
    append_skill(bank, knowledge())
    h1 = bank.content_hash()
    assert h1 == SkillBank(bank.root).content_hash()
    append_skill(bank, knowledge(version=2, body="changed"))
    assert bank.content_hash() != h1


def test_unknown_skill_raises(bank):
    with pytest.raises(UnknownSkill):
        bank.latest("ghost")


def test_cross_instance_visibility_after_append(bank):
    """A skill appended by one handle resolves through a fresh handle at once."""
    other = SkillBank(bank.root)
    append_skill(bank, knowledge())
    other.refresh()
    assert other.has("note-taking")
