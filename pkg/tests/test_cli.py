import io

import pytest

from bihamkit.cli import SCHEMA, run


def _run(*argv):
    buf = io.StringIO()
    code = run(list(argv), stdout=buf)
    return code, buf.getvalue()


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    out = {}
    for name in ("kdv", "ch"):
        p, t = d / f"{name}.pencil", d / f"{name}.transform"
        code, _ = _run("catalog", "--export", name, "--out", str(p), "--transform-out", str(t))
        assert code == 0
        out[name] = (p, t)
    return out


def test_catalog_list():
    code, text = _run("catalog")
    assert code == 0
    assert "entry: kdv" in text and "entry: gas" in text
    assert text.splitlines()[0] == f"schema: {SCHEMA}"


def test_check_kdv(files):
    code, text = _run("check", str(files["kdv"][0]))
    assert code == 0
    assert "jacobi P2: zero" in text and text.endswith("result: pass\n")


def test_invariants_ch(files):
    code, text = _run("invariants", str(files["ch"][0]))
    assert code == 0 and "c1(u): 1/24*u" in text


def test_verify_transform_kdv(files):
    p, t = files["kdv"]
    code, text = _run("verify-transform", str(p), str(t))
    assert code == 0 and "residual first nonzero at eps^6" in text
    code, _ = _run("verify-transform", str(p), str(t), "--expect-clean", "6")
    assert code == 1


def test_reduce_writes_transform(files, tmp_path):
    out = tmp_path / "r.transform"
    code, text = _run("reduce", str(files["kdv"][0]), "--order", "2", "--transform-out", str(out))
    assert code == 0 and "[pass] reduced through eps^2" in text
    assert "[transform]" in out.read_text()


def test_export_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _run("catalog", "--export", "nls", "--out", str(a))
    _run("catalog", "--export", "nls", "--out", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_export_with_params(tmp_path):
    p = tmp_path / "k.pencil"
    assert _run("catalog", "--export", "kdv", "--params", "c=1/24", "--out", str(p))[0] == 0
    code, text = _run("invariants", str(p))
    assert "c1(u): 1/24" in text


def test_csv_format(files):
    code, text = _run("check", str(files["kdv"][0]), "--format", "csv")
    lines = text.splitlines()
    assert lines[0] == "kind,key,value" and lines[1] == f"meta,schema,{SCHEMA}"
    assert "verdict,compatibility,pass" in lines


def test_out_option(files, tmp_path):
    out = tmp_path / "report.txt"
    code, text = _run("check", str(files["kdv"][0]), "--out", str(out))
    assert code == 0 and text == "" and "result: pass" in out.read_text()


def test_lame_command(tmp_path):
    csvp = tmp_path / "f.csv"
    code, text = _run("lame", "--N", "16", "--csv", str(csvp))
    assert code == 0, text
    assert csvp.read_text().splitlines()[3].startswith("u1,u2,gamma12")


class TestExitCodes:
    def test_missing_file(self, capsys):
        assert _run("check", "/nonexistent/file.pencil")[0] == 2

    def test_parse_error(self, tmp_path, capsys):
        p = tmp_path / "bad.pencil"
        p.write_text('[vars]\nw\n[basepoint]\nw = 1\n[bracket1]\nP[0][0].eps0.d1 = "w +"\n')
        assert _run("check", str(p))[0] == 2
        assert "line 6" in capsys.readouterr().err

    def test_grading_error(self, tmp_path):
        p = tmp_path / "bad.pencil"
        p.write_text('[vars]\nw\n[basepoint]\nw = 1\n[bracket1]\nP[0][0].eps0.d1 = "w#1"\n')
        assert _run("check", str(p))[0] == 2

    def test_bad_arguments(self, capsys):
        assert _run("frobnicate")[0] == 2
        assert _run("catalog", "--export", "nope")[0] == 2
        assert _run("lame", "--box", "1,2,3")[0] == 2
        assert _run("lame", "--g12", "sin(q)")[0] == 2
        assert _run("hodograph", "--amplitude", "1.5")[0] == 2

    def test_failed_verdict(self, tmp_path):
        # second bracket: the δ term should be 3 w^2 w_x for antisymmetry
        p = tmp_path / "nj.pencil"
        p.write_text('[vars]\nw\n[basepoint]\nw = 1\n[bracket1]\nP[0][0].eps0.d1 = "1"\n'
                     '[bracket2]\nP[0][0].eps0.d0 = "w^2*w#1"\nP[0][0].eps0.d1 = "2*w^3"\n')
        code, text = _run("check", str(p))
        assert code == 1 and text.endswith("result: FAIL\n")
        assert "[FAIL] antisymmetry P2" in text
