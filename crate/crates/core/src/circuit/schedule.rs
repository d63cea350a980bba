use std::fmt::Write as _;

use serde::Deserialize;

use super::{Circuit, CircuitError, GateKind, Op};

/// Time units per gate kind.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateCosts {
    pub xor: f64,
    pub and: f64,
    pub or: f64,
    pub not: f64,
}

impl Default for GateCosts {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl GateCosts {
    pub fn uniform(c: f64) -> Self {
        Self {
            xor: c,
            and: c,
            or: c,
            not: c,
        }
    }

    pub fn cost(&self, kind: GateKind) -> f64 {
        match kind {
            GateKind::Xor => self.xor,
            GateKind::And => self.and,
            GateKind::Or => self.or,
            GateKind::Not => self.not,
        }
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        if [self.xor, self.and, self.or, self.not].iter().all(|c| c.is_finite() && *c > 0.0) {
            Ok(())
        } else {
            Err(CircuitError::InvalidCost)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    pub workers: usize,
    pub gates: usize,
    pub levels: usize,
    /// Smallest and largest number of gates in one level.
    pub width: (usize, usize),
    pub total_cost: f64,
    /// Heaviest input-to-output path, summing gate costs.
    pub critical_path: f64,
    pub makespan: f64,
    /// Busy fraction: `total_cost / (workers * makespan)`.
    pub utilization: f64,
}

impl ScheduleReport {
    /// `max(critical path, total / workers)`; no schedule can beat it.
    pub fn lower_bound(&self) -> f64 {
        self.critical_path.max(self.total_cost / self.workers as f64)
    }
}

/// Level-by-level list scheduling. Gates whose inputs are ready form a
/// level; a level runs in rounds of at most `workers` gates, heaviest first,
/// and each round takes as long as its slowest gate. With uniform costs a
/// level of `s` gates costs `ceil(s / workers)` gate times.
pub fn schedule(c: &Circuit, workers: usize, costs: &GateCosts) -> Result<ScheduleReport, CircuitError> {
    if workers == 0 {
        return Err(CircuitError::NoWorkers);
    }
    costs.validate()?;
    let levels = c.gate_levels();
    let depth = levels.iter().copied().max().unwrap_or(0);
    let mut by_level: Vec<Vec<f64>> = vec![Vec::new(); depth];
    let mut finish = vec![0.0f64; c.wire_count()];
    for (g, (gate, &l)) in c.gates().iter().zip(&levels).enumerate() {
        let cost = costs.cost(gate.kind);
        by_level[l - 1].push(cost);
        finish[c.input_count() + g] = cost + finish[gate.a].max(finish[gate.b]);
    }
    let mut makespan = 0.0;
    for level in &mut by_level {
        level.sort_by(|a, b| b.total_cmp(a));
        makespan += level.chunks(workers).map(|round| round[0]).sum::<f64>();
    }
    let total_cost: f64 = by_level.iter().flatten().sum();
    let critical_path = finish.iter().copied().fold(0.0, f64::max);
    let width = (
        by_level.iter().map(Vec::len).min().unwrap_or(0),
        by_level.iter().map(Vec::len).max().unwrap_or(0),
    );
    Ok(ScheduleReport {
        workers,
        gates: c.gates().len(),
        levels: depth,
        width,
        total_cost,
        critical_path,
        makespan,
        utilization: if makespan > 0.0 { total_cost / (workers as f64 * makespan) } else { 1.0 },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupRow {
    pub workers: usize,
    pub makespan: f64,
    /// Single-worker makespan over this makespan.
    pub speedup: f64,
    pub efficiency: f64,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupTable {
    pub label: String,
    /// Independent operations in the circuit.
    pub circuits: usize,
    pub gates: usize,
    pub levels: usize,
    pub total_cost: f64,
    pub critical_path: f64,
    pub rows: Vec<SpeedupRow>,
}

impl SpeedupTable {
    /// `min(workers, total / critical path)`.
    pub fn speedup_bound(&self, workers: usize) -> f64 {
        (workers as f64).min(self.total_cost / self.critical_path)
    }
}

pub fn speedup_table(c: &Circuit, workers: &[usize], costs: &GateCosts) -> Result<SpeedupTable, CircuitError> {
    if workers.is_empty() {
        return Err(CircuitError::NoWorkers);
    }
    let base = schedule(c, 1, costs)?;
    let mut rows = Vec::with_capacity(workers.len());
    for &w in workers {
        let r = schedule(c, w, costs)?;
        let speedup = base.makespan / r.makespan;
        rows.push(SpeedupRow {
            workers: w,
            makespan: r.makespan,
            speedup,
            efficiency: speedup / w as f64,
            utilization: r.utilization,
        });
    }
    Ok(SpeedupTable {
        label: String::new(),
        circuits: 1,
        gates: base.gates,
        levels: base.levels,
        total_cost: base.total_cost,
        critical_path: base.critical_path,
        rows,
    })
}

/// Speedup table for `copies` independent `bits`-wide operations.
pub fn batch_table(op: Op, bits: usize, copies: usize, workers: &[usize], costs: &GateCosts) -> Result<SpeedupTable, CircuitError> {
    let c = op.build(bits)?.batch(copies.max(1));
    let mut t = speedup_table(&c, workers, costs)?;
    t.label = format!("{}{bits}", op.name());
    t.circuits = copies.max(1);
    Ok(t)
}

const HEADERS: [&str; 10] = [
    "op", "circuits", "gates", "levels", "critical", "workers", "makespan", "speedup", "efficiency", "utilization",
];

fn cells(tables: &[SpeedupTable]) -> Vec<[String; 10]> {
    let mut out = Vec::new();
    for t in tables {
        for r in &t.rows {
            out.push([
                t.label.clone(),
                t.circuits.to_string(),
                t.gates.to_string(),
                t.levels.to_string(),
                format!("{}", t.critical_path),
                r.workers.to_string(),
                format!("{}", r.makespan),
                format!("{:.4}", r.speedup),
                format!("{:.4}", r.efficiency),
                format!("{:.4}", r.utilization),
            ]);
        }
    }
    out
}

/// Aligned columns: text left-aligned, numbers right-aligned.
pub fn render_text(tables: &[SpeedupTable]) -> String {
    let rows = cells(tables);
    let mut widths: Vec<usize> = HEADERS.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, row: &[&str]| {
        let mut parts = Vec::with_capacity(row.len());
        for (i, (cell, w)) in row.iter().zip(&widths).enumerate() {
            parts.push(if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") });
        }
        writeln!(s, "{}", parts.join("  ").trim_end()).unwrap();
    };
    line(&mut s, &HEADERS);
    for r in &rows {
        line(&mut s, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    s
}

pub fn render_csv(tables: &[SpeedupTable]) -> String {
    let mut s = HEADERS.join(",");
    s.push('\n');
    for r in cells(tables) {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::{build_adder, build_multiplier, Builder};
    use super::*;

    #[test]
    fn serial_and_unbounded_extremes() {
        let c = build_adder(8).unwrap().batch(4);
        let costs = GateCosts::default();
        let one = schedule(&c, 1, &costs).unwrap();
        assert_eq!(one.makespan, c.gates().len() as f64);
        assert_eq!(one.utilization, 1.0);
        let many = schedule(&c, 1 << 20, &costs).unwrap();
        assert_eq!(many.makespan, many.critical_path);
        assert_eq!(many.critical_path, c.depth() as f64);
    }

    #[test]
    fn weighted_serial_makespan_is_total_cost() {
        let c = build_multiplier(4).unwrap();
        let costs = GateCosts {
            xor: 3.0,
            and: 1.0,
            or: 2.0,
            not: 1.0,
        };
        let r = schedule(&c, 1, &costs).unwrap();
        let n = c.gate_counts();
        assert_eq!(r.makespan, 3.0 * n.xor as f64 + n.and as f64 + 2.0 * n.or as f64);
        assert!(schedule(&c, 0, &costs).is_err());
        assert!(schedule(&c, 2, &GateCosts::uniform(0.0)).is_err());
    }

    #[test]
    fn empty_circuit_schedules_to_zero() {
        let c = Builder::new(3).finish(vec![0]);
        let r = schedule(&c, 4, &GateCosts::default()).unwrap();
        assert_eq!((r.makespan, r.levels, r.critical_path), (0.0, 0, 0.0));
    }

    #[test]
    fn report_rendering() {
        let t = batch_table(Op::Add, 2, 2, &[1, 2], &GateCosts::default()).unwrap();
        let text = render_text(&[t.clone()]);
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("op    circuits  gates  levels  critical  workers"));
        let csv = render_csv(&[t]);
        assert_eq!(csv.lines().next().unwrap(), HEADERS.join(","));
        assert!(csv.lines().nth(1).unwrap().starts_with("add2,2,14,3,3,1,14,1.0000,1.0000,1.0000"));
    }
}
