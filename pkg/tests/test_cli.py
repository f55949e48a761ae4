from __future__ import annotations

import csv
import json
import socket

import pytest

from conftest import dblp_xml
from helpers import result, neurips_venue_fixture
from refaudit.cli import main, parse_grid
from refaudit.model import Status
from refaudit.report import export_csv, read_results

TITLES = [
    "Attention is all you need",
    "Deep residual learning for image recognition",
    "Adam: A method for stochastic optimization",
    "Generative adversarial nets",
    "Batch normalization: accelerating deep network training",
    "Dropout: a simple way to prevent neural networks from overfitting",
    "ImageNet classification with deep convolutional neural networks",
    "Sequence to sequence learning with neural networks",
    "Neural machine translation by jointly learning to align and translate",
    "Playing Atari with deep reinforcement learning",
]


@pytest.fixture
def index_path(tmp_path):
    dump = tmp_path / "dblp.xml"
    dump.write_bytes(dblp_xml([{"title": t + ".", "year": 2015, "venue": "Conf", "authors": ["A. Author"]} for t in TITLES]))
    out = tmp_path / "dblp.idx"
    assert main(["build-index", str(dump), str(out)]) == 0
    return out


@pytest.fixture
def refs_file(tmp_path):
    lines = ["# twenty references"]
    for i in range(20):
        title = TITLES[i % 10] if i < 15 else f"A fabricated study of nothing in particular number {i}"
        lines.append(f"[{i + 1}] A. Author and B. Writer. {title}. In Proceedings of Conf, 2019.")
    p = tmp_path / "paper1.txt"
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return p


@pytest.fixture
def no_network(monkeypatch):
    attempts = []

    def guard(self, *args, **kwargs):
        attempts.append(args)
        raise AssertionError("network access attempted")

    monkeypatch.setattr(socket.socket, "connect", guard)
    monkeypatch.setattr(socket.socket, "connect_ex", guard)
    return attempts


def test_build_index_reports_count(tmp_path, capsys):
    dump = tmp_path / "d.xml"
    dump.write_bytes(dblp_xml([{"title": f"Paper {i}"} for i in range(100)]))
    assert main(["build-index", str(dump), str(tmp_path / "i")]) == 0
    assert capsys.readouterr().out.strip() == "100 records"


def test_build_index_missing_and_truncated(tmp_path, capsys):
    assert main(["build-index", str(tmp_path / "nope.xml"), str(tmp_path / "i")]) == 1
    dump = tmp_path / "d.xml"
    data = dblp_xml([{"title": f"Paper {i}"} for i in range(100)])
    dump.write_bytes(data[: len(data) - 100])
    assert main(["build-index", str(dump), str(tmp_path / "i")]) == 1
    assert "line" in capsys.readouterr().err


def test_verify_offline_twenty_rows(tmp_path, index_path, refs_file, no_network, capsys):
    out = tmp_path / "results.csv"
    code = main(["verify", str(refs_file), "--index", str(index_path), "--offline", "-o", str(out), "--progress-every", "5"])
    assert code == 0
    results = read_results(out)
    assert len(results) == 20
    assert [r.raw.ref_index for r in results] == list(range(20))
    by_status = {s: sum(r.status is s for r in results) for s in Status}
    assert by_status[Status.VALID] == 15 and by_status[Status.INVALID] == 5
    assert no_network == []
    err = capsys.readouterr().err
    assert "[5/20]" in err and "[20/20]" in err


def test_verify_resume_skips_exported(tmp_path, index_path, refs_file, capsys):
    out = tmp_path / "results.csv"
    all_lines = refs_file.read_text().splitlines()
    partial = tmp_path / "paper1.txt"
    cache = tmp_path / "cache.sqlite"
    # first run sees only the first 8 references of the same paper
    first = tmp_path / "first"
    first.mkdir()
    (first / "paper1.txt").write_text("\n".join(all_lines[:9]) + "\n")
    assert main(["verify", str(first / "paper1.txt"), "--index", str(index_path), "--offline", "-o", str(out)]) == 0
    assert len(read_results(out)) == 8
    capsys.readouterr()
    assert main(["verify", str(partial), "--index", str(index_path), "--cache", str(cache), "--offline", "-o", str(out), "--resume"]) == 0
    assert "8 already exported" in capsys.readouterr().err
    results = read_results(out)
    assert [r.raw.ref_index for r in results] == list(range(20))


def test_verify_directory_input(tmp_path, index_path, refs_file):
    d = tmp_path / "corpus"
    d.mkdir()
    (d / "a.txt").write_text("A. B. Attention is all you need. NeurIPS, 2017.\n")
    (d / "b.txt").write_text("C. D. Generative adversarial nets. NeurIPS, 2014.\nE. F. Nothing real here at all. X, 2020.\n")
    (d / "notes.md").write_text("ignored")
    out = tmp_path / "r.csv"
    assert main(["verify", str(d), "--index", str(index_path), "--offline", "-o", str(out)]) == 0
    assert [(r.raw.paper_id, r.raw.ref_index) for r in read_results(out)] == [("a", 0), ("b", 0), ("b", 1)]


def test_verify_all_providers_down_exits_2(tmp_path, refs_file):
    dump = tmp_path / "empty.xml"
    dump.write_bytes(dblp_xml([]))
    idx = tmp_path / "empty.idx"
    assert main(["build-index", str(dump), str(idx)]) == 0
    # a port nothing listens on: connections are refused immediately
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        f"[run]\nretries = 0\n\n[provider:db]\nkind = academic\nendpoint = http://127.0.0.1:{port}/search\n\n"
        f"[provider:web]\nkind = websearch\nendpoint = http://127.0.0.1:{port}/web\n"
    )
    out = tmp_path / "r.csv"
    assert main(["verify", str(refs_file), "--index", str(idx), "--config", str(cfg), "-o", str(out)]) == 2
    results = read_results(out)
    assert len(results) == 20
    assert all(r.status is Status.UNVERIFIED for r in results)


def test_verify_offline_ignores_configured_providers(tmp_path, index_path, refs_file, no_network):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[provider:db]\nkind = academic\nendpoint = http://198.51.100.1/search\n\n[llm]\nendpoint = http://198.51.100.1/v1\nmodel = m\n")
    out = tmp_path / "r.csv"
    assert main(["verify", str(refs_file), "--index", str(index_path), "--config", str(cfg), "--offline", "-o", str(out)]) == 0
    assert len(read_results(out)) == 20
    assert no_network == []


def test_verify_input_errors(tmp_path, capsys):
    assert main(["verify", str(tmp_path / "missing.txt"), "--offline"]) == 1
    pdf = tmp_path / "paper.pdf"
    pdf.write_bytes(b"%PDF-1.4")
    assert main(["verify", str(pdf), "--offline", "-o", str(tmp_path / "r.csv")]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[provider:x]\nkind = nonsense\nendpoint = http://x\n")
    assert main(["verify", str(pdf), "--config", str(bad)]) == 1
    assert main(["verify", str(pdf), "--index", str(tmp_path / "no.idx"), "--threshold", "0"]) == 1


def _groups(path, keys):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["paper_id", "venue", "year"])
        for k in keys:
            w.writerow([k.paper_id, k.venue, k.year])


def test_report_venue_fixture(tmp_path):
    results, keys = neurips_venue_fixture()
    res, grp, out = tmp_path / "r.csv", tmp_path / "g.csv", tmp_path / "rep"
    export_csv(results, res)
    _groups(grp, keys)
    assert main(["report", str(res), str(grp), "--out-dir", str(out)]) == 0
    rows = {r["venue"]: r for r in csv.DictReader(open(out / "aggregate.csv"))}
    assert rows["NeurIPS"]["invalid_count"] == "391"
    assert rows["NeurIPS"]["papers_with_invalid"] == "308"
    assert rows["NeurIPS"]["rate_pct"] == "1.51"
    assert rows["Total"]["error_count"] == "59" and rows["Total"]["ghost_count"] == "332"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["corpus"]["invalid"] == 391
    assert summary["temporal_trend"]["error"] == "InsufficientYears"
    assert summary["ci95_cluster_pp"] is not None


def test_report_single_year_mentions_insufficient_years(tmp_path, capsys):
    from refaudit.analytics import GroupKey

    results = [result("p1", 0, Status.INVALID), result("p2", 0, Status.VALID)]
    keys = [GroupKey("ICML", 2025, "p1"), GroupKey("ICML", 2025, "p2")]
    export_csv(results, tmp_path / "r.csv")
    _groups(tmp_path / "g.csv", keys)
    assert main(["report", str(tmp_path / "r.csv"), str(tmp_path / "g.csv"), "--out-dir", str(tmp_path / "o")]) == 0
    assert "InsufficientYears" in capsys.readouterr().err


def test_report_trend_and_repeats(tmp_path):
    from refaudit.analytics import GroupKey

    results, keys = [], []
    # 2023: 1 of 4 papers flagged; 2024: 1 of 4; 2025: 2 of 4
    flagged = {2023: 1, 2024: 1, 2025: 2}
    for year, bad in flagged.items():
        for p in range(4):
            pid = f"{year}-{p}"
            keys.append(GroupKey("AAAI", year, pid))
            status = Status.INVALID if p < bad else Status.VALID
            results.append(result(pid, 0, status, title="A shared ghost title" if status is Status.INVALID else None))
    export_csv(results, tmp_path / "r.csv")
    _groups(tmp_path / "g.csv", keys)
    assert main(["report", str(tmp_path / "r.csv"), str(tmp_path / "g.csv"), "--out-dir", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["temporal_trend"]["delta_pct"] == 100.0
    [rep] = list(csv.DictReader(open(tmp_path / "o" / "repeated.csv")))
    assert rep["paper_count"] == "4" and rep["venues"] == "AAAI"


def test_report_input_errors(tmp_path, capsys):
    grp = tmp_path / "g.csv"
    grp.write_text("paper_id,venue,year\np,V,2020\n")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["report", str(empty), str(grp)]) == 1
    res = tmp_path / "r.csv"
    export_csv([result("p", 0, Status.VALID), result("p", 1, Status.VALID)], res)
    text = res.read_bytes().decode().replace("LocalIndex", "Nowhere", 2)
    res.write_bytes(text.encode())
    assert main(["report", str(res), str(grp)]) == 1
    assert "row 3" in capsys.readouterr().err
    export_csv([result("stranger", 0, Status.VALID)], res)
    assert main(["report", str(res), str(grp), "--out-dir", str(tmp_path / "o")]) == 1


def test_calibrate(tmp_path, capsys):
    (tmp_path / "v.txt").write_text("1.0\n0.98\n0.95\n0.85\n")
    (tmp_path / "i.txt").write_text("# invalid\n0.3\n0.6\n0.92\n")
    assert main(["calibrate", str(tmp_path / "v.txt"), str(tmp_path / "i.txt"), "--grid", "0.5,0.9,1.0"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["threshold", "frac_valid_at_or_below", "frac_invalid_at_or_below"]
    assert rows[2] == ["0.9000", "0.2500", "0.6667"]
    (tmp_path / "bad.txt").write_text("abc\n")
    assert main(["calibrate", str(tmp_path / "bad.txt"), str(tmp_path / "i.txt")]) == 1


def test_parse_grid():
    assert parse_grid("0.8:0.9:0.05") == [0.8, 0.85, 0.9]
    assert parse_grid("0.5, 0.9") == [0.5, 0.9]
    with pytest.raises(ValueError):
        parse_grid("1:0:0.1")


def test_audit_sample_sizes(tmp_path, capsys):
    res = tmp_path / "r.csv"
    export_csv([result("p", i, Status.VALID) for i in range(5000)] + [result("q", 0, Status.INVALID)], res)
    out = tmp_path / "sample.csv"
    assert main(["audit", str(res), "-o", str(out)]) == 0
    plain = read_results(out)
    assert main(["audit", str(res), "--paper-parity", "-o", str(out)]) == 0
    parity = read_results(out)
    assert len(parity) == 400
    assert len(plain) == 357  # finite-population correction at N = 5000
    assert all(r.status is Status.VALID for r in parity)
    assert len({r.raw.key for r in parity}) == 400
