import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cxrscore import dataset
from cxrscore.dataset import ImageRecord, StageGroup, TrainingLabel, TriState
from cxrscore.errors import InvalidInputError, SchemaError

G1, G2, G3, G4 = StageGroup

HANNO = """patient_id,file,day,icu_admit_day,icu_release_day
p1,a.png,3,2,10
p2,b.png,12,10,5
p3,c.txt,1,,
p4,d.jpg,4,,
p5,e.png,x,,
"""

COHEN = """patientid,filename,went_icu,in_icu
1,f1.jpg,Y,N
2,f2.jpg,N,N
3,f3.jpg,Y,Y
4,f4.jpg,,
"""


def test_parse_hanno_offsets_and_rejects():
    records, rejects = dataset.parse_metadata(io.StringIO(HANNO), "hanno")
    by_id = {r.image_id: r for r in records}
    a = by_id["a"]
    assert (a.day, a.icu_admit_day, a.icu_release_day) == (3, 2, 10)
    assert a.went_icu is TriState.YES and a.in_icu_at_capture is TriState.YES
    assert by_id["d"].went_icu is TriState.NO
    reasons = {r.row: r.reason for r in rejects}
    assert set(reasons) == {3, 4, 6}
    assert "precedes" in reasons[3]


def test_parse_missing_column():
    with pytest.raises(SchemaError, match="icu_release_day"):
        dataset.parse_metadata(io.StringIO("patient_id,file,day,icu_admit_day\n"), "hanno")


def test_parse_cohen_and_labels():
    records, rejects = dataset.parse_metadata(io.StringIO(COHEN), "cohen")
    assert not rejects
    labelled, excluded = dataset.derive_training_labels(records)
    labels = {r.image_id: lab for r, lab in labelled}
    assert labels == {"f1": TrainingLabel.FUTURE_ICU, "f2": TrainingLabel.NOT_ICU}
    assert excluded == {"in_icu_at_capture": 1, "icu_status_unknown": 1}


def test_went_icu_no_with_admission_rejected():
    text = "patient_id,file,day,icu_admit_day,icu_release_day,went_icu\np,a.png,1,2,3,no\n"
    records, rejects = dataset.parse_metadata(io.StringIO(text), "hanno")
    assert not records and len(rejects) == 1


def test_duplicate_ids_rejected():
    text = "patient_id,file,went_icu,in_icu\n1,a.png,Y,N\n2,dir/a.png,N,N\n"
    records, rejects = dataset.parse_metadata(io.StringIO(text), "cohen")
    assert len(records) == 1 and "duplicate" in rejects[0].reason


def rec(day, admit=None, release=None, went=None, image_id="x"):
    went = went or (TriState.YES if admit is not None else TriState.NO)
    return ImageRecord(image_id, "p", image_id + ".png", day, admit, release, went)


@pytest.mark.parametrize("r, exclusive, overlapping", [
    (rec(3), G1, {G1}),
    (rec(4, 5, 20), G2, {G2}),
    (rec(10, 0, 20), G3, {G3}),
    (rec(21, 5, 20), G4, {G4}),
    (rec(6, 5, 40), G2, {G2, G3}),
])
def test_assign_group_examples(r, exclusive, overlapping):
    assert dataset.assign_group(r) is exclusive
    assert dataset.assign_group(r, "overlapping") == overlapping


def test_assign_missing_day():
    with pytest.raises(InvalidInputError):
        dataset.assign_group(rec(None))
    assignments, unassigned = dataset.assign_groups([rec(None, image_id="m")])
    assert not assignments and "m" in unassigned


days = st.one_of(st.none(), st.integers(-5, 30))


@given(st.integers(-5, 30), days, st.integers(0, 15))
def test_exclusive_within_overlapping(day, admit, stay):
    release = None if admit is None else admit + stay
    r = rec(day, admit, release)
    exclusive = dataset.assign_group(r)
    overlapping = dataset.assign_group(r, "overlapping")
    if exclusive is None:
        assert overlapping == frozenset()
    else:
        assert exclusive in overlapping


def test_labels_partition():
    records = [ImageRecord(f"i{k}", "p", f"i{k}.png", went_icu=w, in_icu_at_capture=i)
               for k, (w, i) in enumerate((w, i) for w in TriState for i in TriState)]
    labelled, excluded = dataset.derive_training_labels(records)
    ids = [r.image_id for r, _ in labelled]
    assert len(ids) == len(set(ids))
    assert len(labelled) + sum(excluded.values()) == len(records)


def test_csv_and_jsonl_round_trip(tmp_path):
    records, _ = dataset.parse_metadata(io.StringIO(HANNO), "hanno")
    dataset.write_metadata_csv(records, tmp_path / "m.csv", "hanno")
    again, rejects = dataset.parse_metadata(tmp_path / "m.csv", "hanno")
    assert again == records and not rejects
    dataset.write_records_jsonl(records, tmp_path / "m.jsonl")
    assert dataset.read_records_jsonl(tmp_path / "m.jsonl") == records

    cohen, _ = dataset.parse_metadata(io.StringIO(COHEN), "cohen")
    dataset.write_metadata_csv(cohen, tmp_path / "c.csv", "cohen")
    assert dataset.parse_metadata(tmp_path / "c.csv", "cohen")[0] == cohen


def test_rejects_csv(tmp_path):
    _, rejects = dataset.parse_metadata(io.StringIO(HANNO), "hanno")
    dataset.write_rejects_csv(rejects, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "row,reason,raw" and len(lines) == 4


def test_include_list(tmp_path):
    (tmp_path / "inc.txt").write_text("a  # good\n\nd.jpg\n")
    records, _ = dataset.parse_metadata(io.StringIO(HANNO), "hanno")
    kept, dropped = dataset.apply_include_list(records, dataset.read_include_list(tmp_path / "inc.txt"))
    assert [r.image_id for r in kept] == ["a", "d"]
    assert dropped == []


def test_group_counts_exclusive_sum():
    records = [rec(3, image_id="a"), rec(4, 5, 20, image_id="b"), rec(30, 5, 20, image_id="c")]
    assignments, unassigned = dataset.assign_groups(records)
    counts = dataset.group_counts(assignments)
    assert sum(counts.values()) == len(assignments) == 2
    assert list(unassigned) == ["c"]
