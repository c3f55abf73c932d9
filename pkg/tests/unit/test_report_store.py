from envguard.services.report_store import ReportStore


def test_put_is_content_addressed(tmp_path):
    store = ReportStore(tmp_path / "reports")
    a = store.put("verdict", '{"status": "proven"}\n', ".json")
    b = store.put("verdict", '{"status": "proven"}\n', ".json")
    assert a == b
    assert a.startswith("verdict-") and a.endswith(".json")
    assert store.get(a) == '{"status": "proven"}\n'
    assert store.names() == [a]


def test_names_filter_by_kind(tmp_path):
    store = ReportStore(tmp_path)
    store.put("monitor", "v_post >= 0\n")
    store.put("obligation", "p >= 0\n")
    assert len(store.names("monitor")) == 1
    assert store.names("emit") == []


def test_missing_artifacts(tmp_path):
    store = ReportStore(tmp_path / "nothing-yet")
    assert store.names() == []
    assert store.get("monitor-0000.txt") is None
    assert not store.has("monitor-0000.txt")


def test_digest_is_sha256():
    # sha256 of the empty string
    assert ReportStore.digest("").startswith("e3b0c44298fc1c14")
    assert ReportStore.digest(b"x") == ReportStore.digest("x")
