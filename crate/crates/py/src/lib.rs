//! Python bindings: a `Database` class running scripts and queries.

use overrel::engine::Output;
use overrel::relalg::{Relation, Value};
use overrel::storage::{Database as Db, Mode};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDate, PyTuple};
use pyo3::IntoPyObjectExt;

create_exception!(overrel_py, EngineError, PyException, "A command was rejected by the engine.");

/// An object identifier. Shown as `Object`, compared by identity.
#[pyclass(frozen, eq, hash, ord, skip_from_py_object, module = "overrel_py")]
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Oid {
    #[pyo3(get)]
    ordinal: u64,
}

#[pymethods]
impl Oid {
    fn __repr__(&self) -> String {
        format!("Oid({})", self.ordinal)
    }
}

fn value<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    match v {
        Value::Undefined => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Int(i) => i.into_bound_py_any(py),
        Value::Float(f) => f.into_bound_py_any(py),
        Value::Str(s) => s.into_bound_py_any(py),
        Value::Date(d) => Ok(PyDate::new(py, d.year, d.month, d.day)?.into_any()),
        Value::Oid(o) => Oid { ordinal: o.0 }.into_bound_py_any(py),
    }
}

/// A query result: column names and the rows as tuples, in sorted order.
#[pyclass(module = "overrel_py")]
struct Table {
    #[pyo3(get)]
    columns: Vec<String>,
    #[pyo3(get)]
    rows: Vec<Py<PyTuple>>,
}

#[pymethods]
impl Table {
    fn __len__(&self) -> usize {
        self.rows.len()
    }

    fn __repr__(&self) -> String {
        format!("Table({} columns, {} rows)", self.columns.len(), self.rows.len())
    }
}

fn table(py: Python<'_>, r: &Relation) -> PyResult<Table> {
    let columns = r.scheme().names().map(ToString::to_string).collect();
    let rows = r
        .iter()
        .map(|t| {
            let vals = t.iter().map(|v| value(py, v)).collect::<PyResult<Vec<_>>>()?;
            Ok(PyTuple::new(py, vals)?.unbind())
        })
        .collect::<PyResult<_>>()?;
    Ok(Table { columns, rows })
}

fn engine_err(e: impl std::fmt::Display) -> PyErr {
    EngineError::new_err(e.to_string())
}

#[pyclass(name = "Database", module = "overrel_py")]
struct PyDatabase {
    db: Db,
}

#[pymethods]
impl PyDatabase {
    #[new]
    #[pyo3(signature = (mode = "compiled"))]
    fn new(mode: &str) -> PyResult<Self> {
        let mut db = Db::new();
        db.mode = parse_mode(mode)?;
        Ok(PyDatabase { db })
    }

    /// Runs a script; returns one entry per command: a message, a new `Oid` or a `Table`.
    fn run(&mut self, py: Python<'_>, script: &str) -> PyResult<Vec<Py<PyAny>>> {
        let outs = self.db.run_script(script).map_err(engine_err)?;
        outs.iter()
            .map(|o| match o {
                Output::Done(s) => s.into_py_any(py),
                Output::Created(oid) => Oid { ordinal: oid.0 }.into_py_any(py),
                Output::Table(r) => table(py, r)?.into_py_any(py),
            })
            .collect()
    }

    fn query(&mut self, py: Python<'_>, expr: &str) -> PyResult<Table> {
        let r = self.db.query(expr).map_err(engine_err)?;
        table(py, &r)
    }

    fn dump(&self) -> PyResult<String> {
        self.db.dump().map_err(engine_err)
    }

    fn load(&mut self, text: &str) -> PyResult<()> {
        self.db.load(text).map_err(engine_err)
    }

    /// Diagnostics produced since the last call.
    fn warnings(&mut self) -> Vec<String> {
        self.db.take_warnings()
    }

    #[getter]
    fn mode(&self) -> &'static str {
        match self.db.mode {
            Mode::Compiled => "compiled",
            Mode::Oracle => "oracle",
        }
    }

    #[setter]
    fn set_mode(&mut self, mode: &str) -> PyResult<()> {
        self.db.mode = parse_mode(mode)?;
        Ok(())
    }
}

fn parse_mode(s: &str) -> PyResult<Mode> {
    match s {
        "compiled" => Ok(Mode::Compiled),
        "oracle" => Ok(Mode::Oracle),
        _ => Err(PyValueError::new_err(format!("unknown mode {s:?}; expected \"compiled\" or \"oracle\""))),
    }
}

#[pymodule]
fn overrel_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDatabase>()?;
    m.add_class::<Table>()?;
    m.add_class::<Oid>()?;
    m.add("EngineError", m.py().get_type::<EngineError>())?;
    Ok(())
}
