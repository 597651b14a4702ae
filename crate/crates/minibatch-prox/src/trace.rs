//! Run traces: one record per logged point, with cumulative sample and
//! gradient-evaluation counters so cost accounting is auditable from the
//! trace alone.

/// Data-quality marker for one record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QualityFlag {
    Ok,
    /// A logged estimate was NaN or infinite; the record is kept.
    NonFinite,
    /// The inner solver hit its step cap before reaching its tolerance.
    BudgetExhausted,
}

impl QualityFlag {
    pub fn as_str(&self) -> &'static str {
        match self {
            QualityFlag::Ok => "ok",
            QualityFlag::NonFinite => "non_finite",
            QualityFlag::BudgetExhausted => "budget_exhausted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(QualityFlag::Ok),
            "non_finite" => Some(QualityFlag::NonFinite),
            "budget_exhausted" => Some(QualityFlag::BudgetExhausted),
            _ => None,
        }
    }
}

/// One logged point of a driver run. Counters are cumulative within a
/// run and therefore monotone record to record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub run_id: String,
    pub seed: u64,
    pub method: String,
    /// Outer iteration.
    pub t: usize,
    /// Inner iteration, 0 for single-level drivers.
    pub s: usize,
    pub samples_used: u64,
    pub batch_grad_evals: u64,
    pub single_grad_evals: u64,
    pub sim_runtime: f64,
    /// Total single-sample gradient work: batch size times batch
    /// evaluations, plus serial single-sample steps.
    pub energy: u64,
    pub pop_obj_est: f64,
    pub grad_norm_sq_est: f64,
    pub quality_flag: QualityFlag,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Trace::default()
    }

    /// Appends a record. Non-finite estimates are flagged rather than
    /// dropped; counter monotonicity is a hard invariant.
    pub fn append(&mut self, mut record: TraceRecord) {
        if !record.pop_obj_est.is_finite()
            || !record.grad_norm_sq_est.is_finite()
            || !record.sim_runtime.is_finite()
        {
            if record.quality_flag == QualityFlag::Ok {
                record.quality_flag = QualityFlag::NonFinite;
            }
        }
        if let Some(last) = self.records.last() {
            assert!(
                record.samples_used >= last.samples_used
                    && record.batch_grad_evals >= last.batch_grad_evals
                    && record.single_grad_evals >= last.single_grad_evals
                    && record.energy >= last.energy,
                "trace counters must be monotone"
            );
        }
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}
