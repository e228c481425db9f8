import json
import subprocess
import sys

import numpy as np
import pytest

from oblifork.cli import CSV_HEADER, main


def run_cli(args, timeout=300):
    return subprocess.run([sys.executable, "-m", "oblifork.cli"] + args,
                          capture_output=True, text=True, timeout=timeout)


def test_sort_text_roundtrip(tmp_path):
    inp = tmp_path / "in.txt"
    out = tmp_path / "out.txt"
    inp.write_text("5\n3\n9\n1\n")
    assert main(["sort", "--algo", "bitonic", "--in", str(inp),
                 "--out", str(out)]) == 0
    assert out.read_text().split() == ["1", "3", "5", "9"]


def test_sort_single_line_identity(tmp_path):
    inp = tmp_path / "one.txt"
    out = tmp_path / "o.txt"
    inp.write_text("7\n")
    assert main(["sort", "--algo", "bitonic", "--in", str(inp),
                 "--out", str(out)]) == 0
    assert out.read_text().split() == ["7"]


def test_sort_binary_roundtrip(tmp_path):
    from oblifork import ElementArray
    from oblifork.dataio import read_binary, write_binary
    keys = np.array([9, 2, 5], dtype=np.uint64)
    arr = ElementArray.from_keys(keys, values=keys * 7)
    inp = tmp_path / "in.bin"
    out = tmp_path / "out.bin"
    write_binary(inp, arr)
    assert main(["sort", "--algo", "bb", "--in", str(inp), "--out", str(out),
                 "--format", "bin"]) == 0
    got = read_binary(out)
    assert got.key.tolist() == [2, 5, 9]
    assert got.value.tolist() == [14, 35, 63]


def test_sort_report_json(tmp_path, capsys):
    out = tmp_path / "s.txt"
    assert main(["sort", "--algo", "bb", "--n", "4096", "--seed", "7",
                 "--out", str(out), "--report", "json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert set(rep) == {"work", "span", "comparisons", "cacheMisses",
                        "retries", "wallNanos"}
    assert rep["retries"] == 0
    got = [int(x) for x in out.read_text().split()]
    assert got == sorted(got) and len(got) == 4096


def test_sort_byte_identical_across_runs_and_backends(tmp_path):
    inp = tmp_path / "in.txt"
    rng = np.random.default_rng(5)
    inp.write_text("\n".join(str(x) for x in rng.integers(0, 10**9, 3000)))
    outs = []
    for i, threads in enumerate((1, 1, 4)):
        out = tmp_path / f"out{i}.txt"
        assert main(["sort", "--algo", "butterfly", "--in", str(inp),
                     "--out", str(out), "--seed", "7",
                     "--threads", str(threads)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_sort_usage_errors(tmp_path):
    assert main(["sort", "--algo", "bb", "--out", "x"]) == 2  # no input
    assert main(["sort", "--algo", "bb", "--in", "nope.txt", "--n", "4",
                 "--out", "x"]) == 2  # both inputs
    assert main(["sort", "--algo", "bb", "--in",
                 str(tmp_path / "missing.txt"), "--out", "x"]) == 2


def test_bench_schema_and_row_count(capsys):
    assert main(["bench", "--algos", "bitonic,bb", "--sizes", "2^6,2^7,128",
                 "--seeds", "0,1"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) - 1 == 2 * 3 * 2


def test_bench_cache_columns_echo(capsys):
    assert main(["bench", "--algos", "bitonic", "--sizes", "2^8",
                 "--seeds", "0", "--cache-m", "32768", "--cache-b", "64"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    row = lines[1].split(",")
    assert row[7] == "32768" and row[8] == "64"
    n, k = 256, 8
    assert int(row[5]) == n * k * (k + 1) // 4  # comparisons column


def test_bench_reproducible_modulo_wall(capsys):
    args = ["bench", "--algos", "bb", "--sizes", "2^10", "--seeds", "3",
            "--cache-m", "32768", "--cache-b", "64"]
    outs = []
    for _ in range(2):
        assert main(args) == 0
        rows = capsys.readouterr().out.strip().splitlines()
        outs.append([",".join(r.split(",")[:-1]) for r in rows])
    assert outs[0] == outs[1]


def test_bench_bad_size_grammar(capsys):
    assert main(["bench", "--algos", "bitonic", "--sizes", "2^^4"]) == 2
    assert main(["bench", "--algos", "wat", "--sizes", "64"]) == 2


def test_trace_check_exit_codes(tmp_path, capsys):
    assert main(["trace-check", "--op", "bitonic_sort", "--n", "256",
                 "--inputs", "5"]) == 0
    assert main(["trace-check", "--op", "quicksort_control", "--n", "256",
                 "--inputs", "5"]) == 1
    assert main(["trace-check", "--op", "bitonic_sort", "--n", "64",
                 "--inputs", "1"]) == 2
    assert main(["trace-check", "--op", "no_such_op", "--n", "64",
                 "--inputs", "4"]) == 2
    capsys.readouterr()


def test_trace_check_dump_format(tmp_path, capsys):
    dump = tmp_path / "trace.log"
    assert main(["trace-check", "--op", "prefix_sum", "--n", "8",
                 "--inputs", "2", "--dump", str(dump)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("digest ")
    digest = out.split()[1]
    assert len(digest) == 64 and digest == digest.lower()
    for line in dump.read_text().splitlines():
        op, aid, idx = line.split()
        assert op in ("Read", "Write", "Compare", "Fork", "Join")
        int(aid), int(idx)


def test_listrank_and_euler_subcommands(tmp_path, capsys):
    succ = tmp_path / "succ.txt"
    succ.write_text("2\n3\n0\n")
    assert main(["listrank", "--in", str(succ)]) == 0
    assert capsys.readouterr().out.split() == ["2", "1", "0"]

    tree = tmp_path / "tree.txt"
    tree.write_text("1 2\n1 3\n")
    assert main(["euler", "--in", str(tree)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4


def test_cli_entrypoint_subprocess(tmp_path):
    r = run_cli(["sort", "--algo", "bitonic", "--n", "64", "--seed", "1",
                 "--out", str(tmp_path / "x.txt")])
    assert r.returncode == 0
