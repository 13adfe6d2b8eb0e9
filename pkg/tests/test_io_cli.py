import io
import json
import subprocess
import sys

import numpy as np
import pytest

from crda import LabeledDataset
from crda.classifier import predict
from crda.evaluation import SyntheticSpec, evaluate_metrics, make_partially_synthetic
from crda.exceptions import FormatError
from crda.fitting import fit
from crda.io import load_dataset, load_mask, load_model, save_dataset, save_mask, save_model
from crda.cli import main


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_load_dataset_label_mapping(tmp_path):
    f = _write(tmp_path / "d.csv", "label,g1,g2\nA,1,2\nB,3,4\nA,5,6\n")
    data = load_dataset(f)
    np.testing.assert_array_equal(data.labels, [1, 2, 1])
    assert data.class_names == ("A", "B")
    assert data.feature_names == ("g1", "g2")
    np.testing.assert_array_equal(data.features, [[1, 3, 5], [2, 4, 6]])


def test_load_dataset_errors(tmp_path):
    with pytest.raises(FormatError, match="line 3"):
        load_dataset(_write(tmp_path / "a.csv", "label,g1,g2\nA,1,2\nB,3\n"))
    with pytest.raises(FormatError, match="non-numeric"):
        load_dataset(_write(tmp_path / "b.csv", "label,g1\nA,x\n"))
    with pytest.raises(FormatError, match="unknown label"):
        load_dataset(_write(tmp_path / "c.csv", "label,g1\nC,1\n"), class_names=("A", "B"))
    with pytest.raises(FormatError, match="empty"):
        load_dataset(_write(tmp_path / "e.csv", ""))


def test_dataset_round_trip_exact(tmp_path, rng):
    X = rng.standard_normal((4, 7)) * 10.0 ** rng.integers(-8, 8, (4, 1))
    data = LabeledDataset(X, [1, 2, 1, 2, 3, 3, 1], ("a", "b", "c", "d"), ("x", "y", "z"))
    save_dataset(data, tmp_path / "r.csv")
    back = load_dataset(tmp_path / "r.csv")
    np.testing.assert_array_equal(back.features, X)
    np.testing.assert_array_equal(back.labels, data.labels)
    assert back.class_names == data.class_names


def test_mask_round_trip(tmp_path):
    mask = np.array([True, False, False, True])
    save_mask(mask, tmp_path / "m.csv")
    np.testing.assert_array_equal(load_mask(tmp_path / "m.csv"), mask)


@pytest.fixture(scope="module")
def synth():
    spec = SyntheticSpec(p=120, p1=6, class_sizes=(20, 20, 20), n_test=15, shift=2.0, seed=2)
    return make_partially_synthetic(spec)


@pytest.mark.parametrize("variant", ["crda1", "crda2", "crda3", "scrda"])
def test_model_round_trip(tmp_path, synth, variant):
    train, _, _ = synth
    model = fit(train, variant=variant)
    save_model(model, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    X = np.random.default_rng(0).standard_normal((train.p, 100)) * 2
    np.testing.assert_array_equal(predict(X, back), predict(X, model))
    assert (back.variant, back.selector, back.K, back.delta) == \
        (model.variant, model.selector, model.K, model.delta)
    np.testing.assert_array_equal(back.selected_rows, model.selected_rows)
    np.testing.assert_array_equal(back.coefficients, model.coefficients)
    np.testing.assert_array_equal(back.means, model.means)


def test_model_version_and_truncation(tmp_path, synth):
    save_model(fit(synth[0], variant="crda2"), tmp_path / "m.json")
    text = (tmp_path / "m.json").read_text()
    doc = json.loads(text)
    doc["format_version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError, match="format_version"):
        load_model(tmp_path / "v.json")
    (tmp_path / "t.json").write_text(text[: len(text) // 2])
    with pytest.raises(FormatError, match="truncated"):
        load_model(tmp_path / "t.json")


# -- CLI ----------------------------------------------------------------------

def _run(*args):
    out = io.StringIO()
    code = main([str(a) for a in args], out=out)
    return code, out.getvalue()


def test_cli_pipeline(tmp_path):
    d = tmp_path / "syn"
    assert _run("synth", "--p", 100, "--p1", 5, "--sizes", "15,15,15", "--n-test", 15,
                "--shift", 2.0, "--seed", 4, "--out", d)[0] == 0
    assert _run("train", "--data", d / "train.csv", "--variant", "crda2",
                "--out", d / "model.json")[0] == 0
    assert _run("predict", "--model", d / "model.json", "--data", d / "test.csv",
                "--out", d / "pred.csv")[0] == 0
    lines = (d / "pred.csv").read_text().splitlines()
    assert lines[0] == "label" and len(lines) == 16

    code, text = _run("eval", "--model", d / "model.json", "--data", d / "test.csv",
                      "--mask", d / "mask.csv")
    assert code == 0
    model = load_model(d / "model.json")
    test = load_dataset(d / "test.csv", class_names=model.class_names)
    rec = evaluate_metrics(predict(test.features, model), test.labels, model.selected_rows,
                           model.p, load_mask(d / "mask.csv"), variant=model.variant,
                           K=model.K, selector=model.selector.value)
    assert text.splitlines()[1] == rec.csv_row()

    code, text = _run("cv", "--data", d / "train.csv", "--variant", "crda1")
    assert code == 0 and text.startswith("selector,K=")

    code, text = _run("mc", "--data", d / "train.csv", "--variant", "crda2",
                      "--splits", 2, "--train-size", 20, "--folds", 3)
    assert code == 0 and len(text.splitlines()) == 3


def test_cli_predict_without_labels(tmp_path, synth):
    train, test, _ = synth
    save_model(fit(train, variant="crda2"), tmp_path / "m.json")
    header = ",".join(f"f{i + 1}" for i in range(test.p))
    rows = "\n".join(",".join(format(v, ".17g") for v in col) for col in test.features.T)
    _write(tmp_path / "x.csv", header + "\n" + rows + "\n")
    code, _ = _run("predict", "--model", tmp_path / "m.json", "--data", tmp_path / "x.csv",
                   "--out", tmp_path / "p.csv", "--no-labels")
    assert code == 0
    assert len((tmp_path / "p.csv").read_text().splitlines()) == test.n + 1


def test_cli_error_exit_codes(tmp_path, capsys):
    assert _run("train", "--data", tmp_path / "missing.csv", "--out", tmp_path / "m")[0] == 1
    # three members per class cannot support the five folds needed for the penalty CV
    X = np.random.default_rng(0).standard_normal((20, 6))
    save_dataset(LabeledDataset(X, [1, 1, 1, 2, 2, 2]), tmp_path / "s.csv")
    code, _ = _run("train", "--data", tmp_path / "s.csv", "--variant", "crda3",
                   "--out", tmp_path / "m.json")
    assert code == 1
    assert "fold" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["train", "--variant", "crda7"])
    assert exc.value.code == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "crda", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0 and "synth" in res.stdout
