use serde::{Deserialize, Serialize};

use crate::signal::{RandomStream, StreamFactory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AliceLabel {
    Qkd,
    JointTgi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BobLabel {
    Qkd,
    LocalTgi,
}

/// Which analysis a round feeds after the labels are announced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundClass {
    Joint,
    Local,
    Qkd,
    Abandoned,
}

pub fn classify(alice: AliceLabel, bob: BobLabel) -> RoundClass {
    match (alice, bob) {
        (AliceLabel::JointTgi, BobLabel::Qkd) => RoundClass::Joint,
        (AliceLabel::Qkd, BobLabel::LocalTgi) => RoundClass::Local,
        (AliceLabel::Qkd, BobLabel::Qkd) => RoundClass::Qkd,
        (AliceLabel::JointTgi, BobLabel::LocalTgi) => RoundClass::Abandoned,
    }
}

/// Draws both parties' labels for one round. Takes the first two draws of the
/// round stream, Alice's first.
#[inline]
pub fn draw_labels(stream: &mut RandomStream, duty_joint: f64, duty_local: f64) -> (AliceLabel, BobLabel) {
    let alice = if stream.uniform() < duty_joint {
        AliceLabel::JointTgi
    } else {
        AliceLabel::Qkd
    };
    let bob = if stream.uniform() < duty_local {
        BobLabel::LocalTgi
    } else {
        BobLabel::Qkd
    };
    (alice, bob)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSchedule {
    pub duty_joint: f64,
    pub duty_local: f64,
    pub alice_labels: Vec<AliceLabel>,
    pub bob_labels: Vec<BobLabel>,
}

impl SessionSchedule {
    pub fn n_rounds(&self) -> usize {
        self.alice_labels.len()
    }
}

/// Labels for `n` rounds; round `i` uses the stream `(master_seed, i)`, so the
/// labels agree with those drawn by a full session simulation.
pub fn schedule(n: usize, duty_joint: f64, duty_local: f64, master_seed: u64) -> SessionSchedule {
    let factory = StreamFactory::new(master_seed);
    let (alice_labels, bob_labels) = (0..n as u64)
        .map(|i| draw_labels(&mut factory.stream(i), duty_joint, duty_local))
        .unzip();
    SessionSchedule {
        duty_joint,
        duty_local,
        alice_labels,
        bob_labels,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SiftResult {
    pub joint_rounds: Vec<usize>,
    pub local_rounds: Vec<usize>,
    pub qkd_rounds: Vec<usize>,
    pub abandoned: Vec<usize>,
}

pub fn sift(schedule: &SessionSchedule) -> SiftResult {
    let mut out = SiftResult::default();
    for (i, (&a, &b)) in schedule.alice_labels.iter().zip(&schedule.bob_labels).enumerate() {
        match classify(a, b) {
            RoundClass::Joint => out.joint_rounds.push(i),
            RoundClass::Local => out.local_rounds.push(i),
            RoundClass::Qkd => out.qkd_rounds.push(i),
            RoundClass::Abandoned => out.abandoned.push(i),
        }
    }
    out
}
