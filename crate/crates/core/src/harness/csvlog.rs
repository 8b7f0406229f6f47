use std::io::{Read, Write};
use std::path::Path;

use super::run::{EpochRow, RunLog};
use super::HarnessError;

/// Column order of the run log. Stable; consumers index by name.
pub const COLUMNS: [&str; 59] = [
    "t",
    "attack_active",
    "applied",
    "truth_n",
    "truth_e",
    "truth_d",
    "truth_vn",
    "truth_ve",
    "truth_vd",
    "prior_n",
    "prior_e",
    "prior_d",
    "prior_vn",
    "prior_ve",
    "prior_vd",
    "est_n",
    "est_e",
    "est_d",
    "est_vn",
    "est_ve",
    "est_vd",
    "z_n",
    "z_e",
    "z_d",
    "z_vn",
    "z_ve",
    "z_vd",
    "r_n",
    "r_e",
    "r_d",
    "r_vn",
    "r_ve",
    "r_vd",
    "s_n",
    "s_e",
    "s_d",
    "s_vn",
    "s_ve",
    "s_vd",
    "tr_n",
    "tr_e",
    "tr_d",
    "tr_vn",
    "tr_ve",
    "tr_vd",
    "cusum_n",
    "cusum_e",
    "cusum_d",
    "cusum_vn",
    "cusum_ve",
    "cusum_vd",
    "cusum_norm",
    "vel_innov_norm",
    "truth_lat",
    "truth_lon",
    "est_lat",
    "est_lon",
    "z_lat",
    "z_lon",
];

fn to_values(r: &EpochRow) -> Vec<f64> {
    let mut v = Vec::with_capacity(COLUMNS.len());
    v.push(r.t);
    v.push(r.attack_active as u8 as f64);
    v.push(r.applied as u8 as f64);
    for a in [
        r.truth_pos,
        r.truth_vel,
        r.prior_pos,
        r.prior_vel,
        r.est_pos,
        r.est_vel,
        r.z_pos,
        r.z_vel,
    ] {
        v.extend_from_slice(&a);
    }
    for a in [r.r, r.s_diag, r.test_ratio, r.cusum] {
        v.extend_from_slice(&a);
    }
    v.extend_from_slice(&[
        r.cusum_norm,
        r.vel_innov_norm,
        r.truth_lat,
        r.truth_lon,
        r.est_lat,
        r.est_lon,
        r.z_lat,
        r.z_lon,
    ]);
    v
}

fn from_values(v: &[f64]) -> EpochRow {
    let a3 = |o: usize| [v[o], v[o + 1], v[o + 2]];
    let a6 = |o: usize| [v[o], v[o + 1], v[o + 2], v[o + 3], v[o + 4], v[o + 5]];
    EpochRow {
        t: v[0],
        attack_active: v[1] != 0.0,
        applied: v[2] != 0.0,
        truth_pos: a3(3),
        truth_vel: a3(6),
        prior_pos: a3(9),
        prior_vel: a3(12),
        est_pos: a3(15),
        est_vel: a3(18),
        z_pos: a3(21),
        z_vel: a3(24),
        r: a6(27),
        s_diag: a6(33),
        test_ratio: a6(39),
        cusum: a6(45),
        cusum_norm: v[51],
        vel_innov_norm: v[52],
        truth_lat: v[53],
        truth_lon: v[54],
        est_lat: v[55],
        est_lon: v[56],
        z_lat: v[57],
        z_lon: v[58],
    }
}

fn format_value(column: usize, x: f64) -> String {
    if column == 1 || column == 2 {
        format!("{}", x as u8)
    } else {
        format!("{x:.16e}")
    }
}

/// Writes rows as CSV with 17 significant digits per float.
pub fn write_csv<W: Write>(rows: &[EpochRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record(
            to_values(r)
                .iter()
                .enumerate()
                .map(|(i, x)| format_value(i, *x)),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<EpochRow>, String> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| e.to_string())?.clone();
    let want = &COLUMNS;
    if header.len() != want.len() || header.iter().zip(want).any(|(a, b)| a != *b) {
        let missing: Vec<&str> = want
            .iter()
            .copied()
            .filter(|c| !header.iter().any(|h| h == *c))
            .collect();
        return Err(format!("unexpected header; missing columns: {missing:?}"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let vals: Result<Vec<f64>, String> = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>()
                    .map_err(|e| format!("row {}, column {}: {e}", i + 1, want[j]))
            })
            .collect();
        rows.push(from_values(&vals?));
    }
    Ok(rows)
}

pub fn export_csv(log: &RunLog, path: &Path) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(&log.rows, std::io::BufWriter::new(file)).map_err(|e| HarnessError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn parse_csv(path: &Path) -> Result<Vec<EpochRow>, HarnessError> {
    let file = std::fs::File::open(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(std::io::BufReader::new(file)).map_err(|message| HarnessError::Csv {
        path: path.to_path_buf(),
        message,
    })
}
