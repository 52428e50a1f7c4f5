"""Smoke test for the Python bindings. Run after `pip install --no-build-isolation crates/py`."""

import datetime

import overrel_py as ov

SCHEMA = """
DESCRIBE TUPLE Line { qty INTEGER; day DATE; };
CREATE CLASS Box { label STRING CONSTRAIN GLOBALKEY label; lines SET OF Line; total INTEGER; Box(l STRING); };
ALTER CLASS Box REALIZE label, lines AS STORED
  REALIZE total AS SELECT Sum(qty) FROM lines
  REALIZE Box AS BEGIN label := l; END;
"""


def main():
    db = ov.Database()
    assert db.mode == "compiled"
    db.run(SCHEMA)
    made = db.run('NEW Box("a"); NEW Box("b");')
    assert all(isinstance(o, ov.Oid) for o in made), made
    db.run('INSERT {qty: 2, day: #01.04.2005#} INTO (Box WHERE label = "a").lines;'
           'INSERT {qty: 3, day: #02.04.2005#} INTO (Box WHERE label = "a").lines;')

    t = db.query('(Box WHERE label = "a")[label, total]')
    assert t.columns == ["label", "total"], t.columns
    assert t.rows == [("a", 5)], t.rows

    lines = db.query("Box.lines")
    assert lines.columns == ["OID", "qty", "day"], lines.columns
    days = sorted(r[2] for r in lines.rows)
    assert days == [datetime.date(2005, 4, 1), datetime.date(2005, 4, 2)], days
    assert db.query('(Box WHERE label = "b")[total]').rows == [(None,)]

    db.run("Box.total := 1;")
    assert any("ignored" in w for w in db.warnings())

    try:
        db.run('NEW Box("a");')
    except ov.EngineError as e:
        assert "key" in str(e).lower(), e
    else:
        raise AssertionError("duplicate key accepted")

    text = db.dump()
    other = ov.Database(mode="oracle")
    other.load(text)
    assert other.mode == "oracle"
    assert other.dump() == text
    assert other.query("Box[label]").rows == [("a",), ("b",)]

    try:
        ov.Database(mode="fast")
    except ValueError:
        pass
    else:
        raise AssertionError("bad mode accepted")
    print("python smoke test: ok")


if __name__ == "__main__":
    main()
