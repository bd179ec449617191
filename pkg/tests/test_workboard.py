import threading

import pytest

from tablecrew.errors import (
    LockTimeout,
    MalformedBoard,
    NotAuthorized,
    PathExists,
    SlotNotOwned,
)
from tablecrew.workboard import (
    ORCHESTRATOR_ACTOR,
    add_subtasks,
    edit_slot,
    init_workboard,
    is_converged,
    merge_step,
    parse_board,
    read_workboard,
    render_board,
    set_status,
)

from conftest import make_specs


@pytest.fixture
def board_path(tmp_path):
    return tmp_path / "board.md"


@pytest.fixture
def board3(board_path, three_col_schema):
    specs = make_specs(three_col_schema, "t1", "t2", "t3")
    init_workboard(specs, "Find the data.", board_path)
    return board_path


def test_init_creates_pending_board(board3):
    board = read_workboard(board3)
    assert [e.status for e in board.entries] == ["pending"] * 3
    assert all(board.slots[sid] == "" for sid in ("t1", "t2", "t3"))
    assert board.shared_context == "Find the data."


def test_init_wire_format_is_exact(board_path, three_col_schema):
    init_workboard(make_specs(three_col_schema, "t1"), "ctx", board_path)
    expected = (
        "# Workboard\n"
        "\n"
        "## Task Checklist\n"
        "- [ ] t1: work on t1 (status: pending)\n"
        "\n"
        "## Shared Context\n"
        "ctx\n"
        "\n"
        "## Worker Results\n"
        "<t1_result>\n"
        "\n"
        "</t1_result>\n"
    )
    assert board_path.read_text(encoding="utf-8") == expected


def test_init_rejects_empty_decomposition(board_path):
    with pytest.raises(ValueError):
        init_workboard([], "ctx", board_path)


def test_init_rejects_existing_path(board3, three_col_schema):
    with pytest.raises(PathExists):
        init_workboard(make_specs(three_col_schema, "t9"), "ctx", board3)


def test_context_with_markdown_heading_still_parses(board_path, three_col_schema):
    context = "## Notes\nsome context with a heading\n### deeper"
    init_workboard(make_specs(three_col_schema, "t1", "t2", "t3"), context, board_path)
    board = read_workboard(board_path)
    assert board.shared_context == context
    assert len(board.entries) == 3


def test_round_trip_is_byte_identical(board3):
    raw = board3.read_text(encoding="utf-8")
    assert render_board(parse_board(raw)) == raw


def test_append_semantics(board3):
    edit_slot(board3, "t1", "row A")
    edit_slot(board3, "t1", "row B")
    assert read_workboard(board3).slots["t1"] == "row A\nrow B"


def test_replace_mode(board3):
    edit_slot(board3, "t1", "old")
    edit_slot(board3, "t1", "new", mode="replace")
    assert read_workboard(board3).slots["t1"] == "new"


def test_write_isolation_between_slots(board3):
    edit_slot(board3, "t1", "t1 payload")
    before = board3.read_text(encoding="utf-8")
    edit_slot(board3, "t2", "t2 payload")
    after = board3.read_text(encoding="utf-8")
    # every byte outside t2's region identical: remove t2's region from both
    open_tag, close_tag = "<t2_result>\n", "\n</t2_result>\n"
    def outside(text):
        a = text.index(open_tag) + len(open_tag)
        b = text.index(close_tag)
        return text[:a], text[b:]
    assert outside(before) == outside(after)
    assert read_workboard(board3).slots["t1"] == "t1 payload"


def test_edit_slot_unknown_writer(board3):
    with pytest.raises(SlotNotOwned):
        edit_slot(board3, "t9", "payload")


def test_edit_slot_rejects_own_close_tag(board3):
    with pytest.raises(ValueError):
        edit_slot(board3, "t1", "sneaky </t1_result> injection")


def test_payload_with_other_slot_tags_is_safe(board3):
    edit_slot(board3, "t1", "mentions </t2_result> and <t2_result> freely")
    edit_slot(board3, "t2", "t2 data")
    board = read_workboard(board3)
    assert board.slots["t2"] == "t2 data"
    assert "</t2_result>" in board.slots["t1"]


def test_set_status_own_line(board3):
    set_status(board3, "t1", "done", actor_id="t1")
    board = read_workboard(board3)
    assert board.status_of("t1") == "done"
    assert board.status_of("t2") == "pending"


def test_set_status_peer_rejected(board3):
    with pytest.raises(NotAuthorized):
        set_status(board3, "t2", "done", actor_id="t1")


def test_set_status_orchestrator_override(board3):
    set_status(board3, "t2", "failed", actor_id=ORCHESTRATOR_ACTOR)
    assert read_workboard(board3).status_of("t2") == "failed"


def test_malformed_board_missing_close_tag(board3):
    raw = board3.read_text(encoding="utf-8").replace("</t3_result>\n", "")
    board3.write_text(raw, encoding="utf-8")
    with pytest.raises(MalformedBoard):
        read_workboard(board3)


def test_malformed_board_missing_section():
    with pytest.raises(MalformedBoard):
        parse_board("# Workboard\n\nnot a checklist\n")


def test_merge_step_commutes(board3):
    board = read_workboard(board3)
    ab = merge_step(merge_step(board, {"t1": "x"}), {"t2": "y"})
    ba = merge_step(merge_step(board, {"t2": "y"}), {"t1": "x"})
    assert render_board(ab) == render_board(ba)
    both = merge_step(board, {"t1": "x", "t2": "y"})
    assert render_board(both) == render_board(ab)


def test_merge_step_identity(board3):
    board = read_workboard(board3)
    assert render_board(merge_step(board, {})) == render_board(board)


def test_merge_step_matches_sequential_edit_slot_oracle(tmp_path, three_col_schema):
    """merge_step on the in-memory board equals five sequential on-disk edits."""
    specs = make_specs(three_col_schema, "t1", "t2", "t3", "t4", "t5")
    path = tmp_path / "b.md"
    init_workboard(specs, "ctx", path)
    board = read_workboard(path)
    contributions = {f"t{i}": f"payload {i}" for i in range(1, 6)}
    merged = merge_step(board, contributions)
    for sid, payload in contributions.items():
        edit_slot(path, sid, payload)
    assert render_board(merged) == path.read_text(encoding="utf-8")


def test_is_converged(board3):
    board = read_workboard(board3)
    assert not is_converged(board)
    for sid in ("t1", "t2", "t3"):
        set_status(board3, sid, "done" if sid != "t2" else "failed", actor_id=sid)
    assert is_converged(read_workboard(board3))


def test_add_subtasks_orchestrator_only(board3, three_col_schema):
    with pytest.raises(NotAuthorized):
        add_subtasks(board3, make_specs(three_col_schema, "t4"), actor_id="t1")
    add_subtasks(board3, make_specs(three_col_schema, "t4"), actor_id=ORCHESTRATOR_ACTOR)
    board = read_workboard(board3)
    assert board.status_of("t4") == "pending"
    assert board.slots["t4"] == ""


def test_lock_timeout_surfaces(board3):
    import fcntl

    lock_file = open(str(board3) + ".lock", "w")
    fcntl.flock(lock_file, fcntl.LOCK_EX)
    try:
        with pytest.raises(LockTimeout):
            edit_slot(board3, "t1", "blocked", lock_wait_s=0.1)
    finally:
        fcntl.flock(lock_file, fcntl.LOCK_UN)
        lock_file.close()


def test_concurrent_appends_small_stress(board3):
    """3 writers x 10 appends: no lost updates, round-trip intact."""
    def writer(sid):
        for i in range(10):
            edit_slot(board3, sid, f"{sid} row {i}")

    threads = [threading.Thread(target=writer, args=(sid,)) for sid in ("t1", "t2", "t3")]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    board = read_workboard(board3)
    for sid in ("t1", "t2", "t3"):
        lines = board.slots[sid].split("\n")
        assert lines == [f"{sid} row {i}" for i in range(10)]
    raw = board3.read_text(encoding="utf-8")
    assert render_board(parse_board(raw)) == raw
