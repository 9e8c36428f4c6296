"""Annotation CSV parsing and its failure messages."""

import pytest

from embex.annotations import read_annotations


def write_csv(tmp_path, body, header="path,x,y,w,h,label,frame"):
    path = tmp_path / "boxes.csv"
    path.write_text(header + "\n" + body, encoding="utf-8")
    return path


def test_parses_rows_in_order(tmp_path):
    path = write_csv(tmp_path, "a.png,0,0,10,10,stop,0\nb.png,5,2,8,4,yield,1\n")
    rows = read_annotations(path)
    assert [r.index for r in rows] == [0, 1]
    assert rows[0].path == "a.png" and rows[0].label == "stop"
    assert (rows[1].x, rows[1].y, rows[1].w, rows[1].h) == (5, 2, 8, 4)
    assert rows[1].frame == 1
    assert rows[1].line == 3


def test_extra_columns_are_tolerated(tmp_path):
    path = write_csv(
        tmp_path,
        "a.png,0,0,10,10,stop,0,0.93\n",
        header="path,x,y,w,h,label,frame,confidence",
    )
    assert len(read_annotations(path)) == 1


def test_missing_column_is_named(tmp_path):
    path = write_csv(tmp_path, "a.png,0,0,10,10,0\n", header="path,x,y,w,h,frame")
    with pytest.raises(ValueError, match="label"):
        read_annotations(path)


def test_empty_label_names_the_line(tmp_path):
    path = write_csv(tmp_path, "a.png,0,0,10,10,stop,0\na.png,0,0,10,10,,1\n")
    with pytest.raises(ValueError, match=r"boxes\.csv:3: empty label"):
        read_annotations(path)


def test_non_integer_box_is_rejected(tmp_path):
    path = write_csv(tmp_path, "a.png,0,0,ten,10,stop,0\n")
    with pytest.raises(ValueError, match="non-integer"):
        read_annotations(path)


def test_non_positive_box_is_rejected(tmp_path):
    path = write_csv(tmp_path, "a.png,0,0,0,10,stop,0\n")
    with pytest.raises(ValueError, match="not positive"):
        read_annotations(path)


def test_negative_position_is_rejected(tmp_path):
    path = write_csv(tmp_path, "a.png,-1,0,4,4,stop,0\n")
    with pytest.raises(ValueError, match="negative box position"):
        read_annotations(path)
