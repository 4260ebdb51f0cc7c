//! Communication accounting.
//!
//! A communication round is one directed transfer, either every
//! participating client uploading to the server or the server broadcasting
//! to the participants. Cohort size does not change the round count; it is
//! recorded per event for message and byte totals.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommEvent {
    pub iter: usize,
    pub direction: Direction,
    /// Clients taking part; zero marks a skipped event.
    pub participants: usize,
    /// Shape `(d, m)` of the matrix carried by each message.
    pub payload_shape: (usize, usize),
}

impl CommEvent {
    pub fn messages(&self) -> usize {
        self.participants
    }

    pub fn bytes(&self) -> usize {
        self.participants * self.payload_shape.0 * self.payload_shape.1 * std::mem::size_of::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    /// Full-gradient local steps with an aggregation every iteration.
    Rfrec,
    /// Randomized local/aggregation schedule; communicates only when the
    /// schedule switches sides.
    Rfrecf,
    /// Alternating gradient exchange baseline.
    Fcf,
}

impl TrainerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainerKind::Rfrec => "rfrec",
            TrainerKind::Rfrecf => "rfrecf",
            TrainerKind::Fcf => "fcf",
        }
    }
}

impl std::fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrainerKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rfrec" => Ok(TrainerKind::Rfrec),
            "rfrecf" => Ok(TrainerKind::Rfrecf),
            "fcf" => Ok(TrainerKind::Fcf),
            other => Err(crate::Error::Config(format!("unknown trainer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommLog {
    pub kind: TrainerKind,
    pub events: Vec<CommEvent>,
    /// The shared schedule bits, one per completed iteration (fast trainer
    /// only).
    pub zeta_seq: Option<Vec<bool>>,
    pub iterations: usize,
}

impl CommLog {
    pub fn new(kind: TrainerKind) -> Self {
        Self {
            kind,
            events: Vec::new(),
            zeta_seq: (kind == TrainerKind::Rfrecf).then(Vec::new),
            iterations: 0,
        }
    }

    pub fn rounds(&self) -> usize {
        self.events.len()
    }

    pub fn messages(&self) -> usize {
        self.events.iter().map(CommEvent::messages).sum()
    }

    pub fn bytes(&self) -> usize {
        self.events.iter().map(CommEvent::bytes).sum()
    }

    /// Number of `k ≥ 1` with `ζ_{k−1} ≠ ζ_k`.
    pub fn zeta_transitions(&self) -> Option<usize> {
        self.zeta_seq
            .as_ref()
            .map(|z| z.windows(2).filter(|w| w[0] != w[1]).count())
    }

    /// Checks the per-kind event-count identity.
    pub fn is_consistent(&self) -> bool {
        match self.kind {
            TrainerKind::Rfrec | TrainerKind::Fcf => self.events.len() == 2 * self.iterations,
            TrainerKind::Rfrecf => self.zeta_transitions() == Some(self.events.len()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions_count() {
        let mut log = CommLog::new(TrainerKind::Rfrecf);
        log.zeta_seq = Some(vec![false, true, true, false, false, true]);
        assert_eq!(log.zeta_transitions(), Some(3));
        assert!(!log.is_consistent());
    }

    #[test]
    fn bytes_scale_with_participants() {
        let e = CommEvent {
            iter: 0,
            direction: Direction::ClientToServer,
            participants: 3,
            payload_shape: (2, 5),
        };
        assert_eq!(e.bytes(), 3 * 10 * 8);
    }

    #[test]
    fn kind_parses() {
        assert_eq!("RFRecF".parse::<TrainerKind>().unwrap(), TrainerKind::Rfrecf);
        assert!("svd".parse::<TrainerKind>().is_err());
    }
}
