import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trackcl.embedding import Encoder
from trackcl.errors import ParseError
from trackcl.io import (
    Checkpoint, checkpoint_bytes, checkpoint_from_bytes, format_features, format_mot, load_checkpoint,
    load_scenario, parse_features, parse_mot, rows_to_instances, rows_to_tracks, save_checkpoint,
    save_pseudo_tracks, save_scenario, tracks_to_rows, write_mot,
)
from trackcl.pseudo_label import pseudo_label
from trackcl.simgen import SimConfig, generate_scenario


def test_parse_single_row():
    (r,) = parse_mot("1,3,10.0,20.0,30.0,40.0,0.9,-1,-1,-1\n")
    assert (r.frame, r.id, r.box, r.conf) == (0, 3, (10.0, 20.0, 30.0, 40.0), 0.9)
    (inst,) = rows_to_instances([r])
    assert inst.identity == 3


def test_unassociated_detection():
    (r,) = parse_mot("1,-1,10,20,30,40,0.5,-1,-1,-1\n")
    (inst,) = rows_to_instances([r])
    assert inst.identity is None
    assert rows_to_tracks([r]) == []


@pytest.mark.parametrize("text,line", [
    ("1,1,1,1,1,1,0.5\n2,1,1,1\n", 2),
    ("1,x,1,1,1,1,0.5,-1,-1,-1\n", 1),
    ("0,1,1,1,1,1,0.5,-1,-1,-1\n", 1),
    ("1,1,1,1,0,1,0.5,-1,-1,-1\n", 1),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(ParseError) as exc:
        parse_mot(text)
    assert exc.value.line == line


def test_parse_error_names_file(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("1,1,1\n")
    with pytest.raises(ParseError, match="bad.txt:1"):
        parse_mot(p)


finite = st.floats(-1e6, 1e6, allow_nan=False)
positive = st.floats(1e-3, 1e4)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 500), st.integers(-1, 50), finite, finite, positive, positive,
                          st.floats(0, 1)), max_size=30))
def test_canonical_round_trip(rows):
    text = "".join(f"{f},{i},{x!r},{y!r},{w!r},{h!r},{c!r},-1,-1,-1\n" for f, i, x, y, w, h, c in rows)
    assert format_mot(parse_mot(text)) == text


def test_extra_columns_preserved():
    text = "3,2,1.0,2.0,3.0,4.0,1.0,7,8,9\n"
    assert format_mot(parse_mot(text)) == text


def test_feature_sidecar_round_trip():
    s = generate_scenario(SimConfig(num_objects=3, frames=5, seed=0))
    rows = tracks_to_rows(s.gt_tracks)
    feats = [next(i.feature for t in s.gt_tracks if t.id == r.id for i in t.instances if i.frame == r.frame) for r in rows]
    text = format_features(rows, feats)
    assert text.startswith("# trackcl-features v1 dim=16\n")
    parsed = parse_features(text)
    assert len(parsed) == len(rows)
    # keyed by (frame, position within the frame), in file order
    assert format_features(rows, list(parsed.values())) == text
    for (frame, _), v, f in zip(parsed, parsed.values(), feats):
        assert np.array_equal(v, f)


def test_feature_sidecar_errors():
    with pytest.raises(ParseError):
        parse_features("1,0,0.5\n")
    with pytest.raises(ParseError) as exc:
        parse_features("# trackcl-features v1 dim=2\n1,0,0.5\n")
    assert exc.value.line == 2


def test_scenario_round_trip(tmp_path):
    s = generate_scenario(SimConfig(num_objects=6, frames=40, seed=3))
    save_scenario(s, tmp_path / "s")
    assert load_scenario(tmp_path / "s") == s
    before = {p.name: p.read_bytes() for p in (tmp_path / "s").iterdir()}
    save_scenario(load_scenario(tmp_path / "s"), tmp_path / "t")
    assert before == {p.name: p.read_bytes() for p in (tmp_path / "t").iterdir()}


def test_gt_file_round_trip(tmp_path):
    s = generate_scenario(SimConfig(num_objects=4, frames=20, seed=0))
    write_mot(tmp_path / "gt.txt", tracks_to_rows(s.gt_tracks))
    text = (tmp_path / "gt.txt").read_text()
    assert format_mot(parse_mot(tmp_path / "gt.txt")) == text


def test_pseudo_tracks_have_provenance(tmp_path):
    s = generate_scenario(SimConfig(num_objects=4, frames=20, seed=0))
    tracks = pseudo_label(list(s.detections))
    save_pseudo_tracks(tracks, tmp_path, s.name, s.frames)
    assert '"source": "pseudo"' in (tmp_path / "pseudo.meta.json").read_text()
    back = rows_to_tracks(parse_mot(tmp_path / "pseudo.txt"), parse_features(tmp_path / "pseudo.features"), "pseudo")
    assert [t.id for t in back] == [t.id for t in tracks]


def make_ckpt(seed=0):
    enc = Encoder.random(16, 32, 64, np.random.default_rng(seed))
    return Checkpoint(enc, {"loss": "tcl", "seed": seed}, {"state": 1}, 3, 0.123456789, (1.5, 0.25))


def test_checkpoint_round_trip(tmp_path):
    ckpt = make_ckpt()
    save_checkpoint(ckpt, tmp_path / "a.ckpt")
    loaded = load_checkpoint(tmp_path / "a.ckpt")
    assert loaded.encoder == ckpt.encoder
    assert (loaded.config, loaded.epoch, loaded.running_loss, loaded.loss_history) == (ckpt.config, 3, 0.123456789, (1.5, 0.25))
    save_checkpoint(loaded, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_header_is_self_describing():
    blob = checkpoint_bytes(make_ckpt())
    assert blob.startswith(b"TRACKCL-CKPT\n")
    assert b'"D_in":16' in blob and b'"dtype":"<f8"' in blob


def test_checkpoint_rejects_garbage():
    with pytest.raises(ParseError):
        checkpoint_from_bytes(b"nope")
    with pytest.raises(ParseError):
        checkpoint_from_bytes(checkpoint_bytes(make_ckpt()) + b"x")
