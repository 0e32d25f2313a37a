//! CSV writers. Reals are written with 17 significant digits.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::gains::GainTable;
use crate::grid::{Field, TriGrid};
use crate::sim::Trajectory;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// `x, y, value` for every stored node, row-major.
pub fn write_tri<W: Write>(out: W, t: &TriGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "value"])?;
    for (i, j) in t.indices() {
        w.write_record([num(t.coord(i)), num(t.coord(j)), num(t.get(i, j))])?;
    }
    w.flush()?;
    Ok(())
}

/// `x, y` followed by one column per triangle; all triangles share size and orientation.
pub fn write_tri_columns<W: Write>(out: W, names: &[&str], tris: &[&TriGrid]) -> Result<()> {
    let first = tris.first().ok_or(Error::MissingInput("no triangles to write".into()))?;
    for t in tris {
        if t.n() != first.n() || t.orientation() != first.orientation() {
            return Err(Error::GridMismatch {
                expected: first.n(),
                found: t.n(),
            });
        }
    }
    if names.len() != tris.len() {
        return Err(invalid("one column name per triangle"));
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["x", "y"];
    header.extend_from_slice(names);
    w.write_record(&header)?;
    for (i, j) in first.indices() {
        let mut row = vec![num(first.coord(i)), num(first.coord(j))];
        row.extend(tris.iter().map(|t| num(t.get(i, j))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `x, value`.
pub fn write_field<W: Write>(out: W, f: &Field) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "value"])?;
    for (x, v) in f.grid.nodes().iter().zip(&f.values) {
        w.write_record([num(*x), num(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// `y, F1, F2`, with the fold node written twice (left branch, then right).
pub fn write_gains<W: Write>(out: W, gt: &GainTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["y", "F1", "F2"])?;
    let k0 = gt.fold_node_index;
    for (k, &y) in gt.grid().nodes().iter().enumerate() {
        w.write_record([num(y), num(gt.f1.values[k]), num(gt.f2.values[k])])?;
        if k == k0 {
            w.write_record([num(y), num(gt.f1_fold_right), num(gt.f2_fold_right)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t, norm_u, norm_err, U1, U2`; `norm_err` is empty without an observer.
pub fn write_trajectory<W: Write>(out: W, tr: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "norm_u", "norm_err", "U1", "U2"])?;
    for (k, &t) in tr.times.iter().enumerate() {
        let err = tr.norm_err.get(k).map(|v| num(*v)).unwrap_or_default();
        w.write_record([num(t), num(tr.norm_u[k]), err, num(tr.controls[k].0), num(tr.controls[k].1)])?;
    }
    w.flush()?;
    Ok(())
}

/// `t, y, u, uhat` for every snapshot; `uhat` is empty without an observer.
pub fn write_snapshots<W: Write>(out: W, tr: &Trajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "y", "u", "uhat"])?;
    for (s, &t) in tr.snapshot_times.iter().enumerate() {
        let u = &tr.u_snapshots[s];
        let uh = tr.uhat_snapshots.as_ref().map(|v| &v[s]);
        for (k, &y) in u.grid.nodes().iter().enumerate() {
            let h = uh.map(|f| num(f.values[k])).unwrap_or_default();
            w.write_record([num(t), num(y), num(u.values[k]), h])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid1D, Orientation};

    #[test]
    fn tri_rows_and_precision() {
        let t = TriGrid::from_fn(3, Orientation::Lower, |x, y| x + y / 3.0);
        let mut buf = Vec::new();
        write_tri(&mut buf, &t).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "x,y,value");
        assert_eq!(lines.len(), 1 + 6);
        let last: Vec<f64> = lines[6].split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(last[2], 1.0 + 1.0 / 3.0);
    }

    #[test]
    fn column_writer_checks_shapes() {
        let a = TriGrid::from_fn(4, Orientation::Lower, |x, y| x - y);
        let b = TriGrid::from_fn(4, Orientation::Lower, |x, y| x * y);
        let mut buf = Vec::new();
        write_tri_columns(&mut buf, &["a", "b"], &[&a, &b]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next().unwrap(), "x,y,a,b");
        assert_eq!(s.lines().count(), 11);
        let c = TriGrid::zeros(5, Orientation::Lower);
        assert!(write_tri_columns(Vec::new(), &["a", "c"], &[&a, &c]).is_err());
        assert!(write_tri_columns(Vec::new(), &["a"], &[&a, &b]).is_err());
    }

    #[test]
    fn field_round_trips_exactly() {
        let f = Field::from_fn(Grid1D::unit(7).unwrap(), |x| (3.0 * x).exp() / 7.0);
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let vals: Vec<f64> = s.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(vals, f.values);
    }
}
