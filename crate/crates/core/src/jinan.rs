//! The shipped Jinan field deployment: topology, measured loss matrix and
//! the per-connection field observations used to calibrate device profiles.

use crate::topology::{parse_loss_matrix, ConnectionId, LossMatrix, Topology};

pub const TOPOLOGY_TEXT: &str = include_str!("../../../configs/jinan.topo");
pub const LOSS_MATRIX_TEXT: &str = include_str!("../../../configs/jinan_table1.matrix");

/// Length of the field run.
pub const EXPERIMENT_DAYS: u32 = 36;

pub fn topology() -> Topology {
    Topology::parse(TOPOLOGY_TEXT).expect("shipped topology parses")
}

pub fn loss_matrix() -> LossMatrix {
    parse_loss_matrix(LOSS_MATRIX_TEXT).expect("shipped matrix parses")
}

/// One row of field observations for a live connection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldRecord {
    pub transmitter: &'static str,
    pub receiver: &'static str,
    pub route: &'static str,
    pub length_km: f64,
    pub loss_db: f64,
    pub pairing_count: u32,
    pub key_rate_kbps: f64,
    /// Fraction, not percent.
    pub qber: f64,
}

impl FieldRecord {
    pub fn connection(&self) -> ConnectionId {
        ConnectionId::new(self.transmitter, self.receiver)
    }
}

macro_rules! rec {
    ($tx:literal, $rx:literal, $route:literal, $len:expr, $loss:expr, $n:expr, $rate:expr, $q:expr) => {
        FieldRecord {
            transmitter: $tx,
            receiver: $rx,
            route: $route,
            length_km: $len,
            loss_db: $loss,
            pairing_count: $n,
            key_rate_kbps: $rate,
            qber: $q / 100.0,
        }
    };
}

pub const FIELD_RECORDS: [FieldRecord; 30] = [
    rec!("U2", "U1", "U2->X1->U1", 0.94, 4.1, 128, 16.437, 1.204),
    rec!("U2", "U3", "U2->X1->U3", 2.97, 5.8, 130, 15.544, 1.106),
    rec!("U2", "U6", "U2->X1->U6", 9.84, 9.5, 115, 9.003, 1.006),
    rec!("U2", "U9", "U2->X1->X4->U9", 10.97, 11.36, 47, 3.939, 1.008),
    rec!(
        "U2",
        "U10",
        "U2->X1->X5->U10",
        10.55,
        11.27,
        114,
        3.201,
        1.068
    ),
    rec!("U2", "U13", "U2->X1->X2->U13", 16.29, 10.0, 90, 2.91, 1.623),
    rec!("U2", "U14", "U2->X1->X3->U14", 21.93, 12.0, 70, 7.11, 0.865),
    rec!("U4", "U1", "U4->X1->U1", 0.47, 3.1, 161, 35.277, 0.627),
    rec!("U4", "U3", "U4->X1->U3", 2.5, 4.8, 170, 29.997, 0.646),
    rec!("U4", "U6", "U4->X1->U6", 9.37, 8.5, 136, 22.094, 0.633),
    rec!("U4", "U9", "U4->X1->X4->U9", 10.5, 10.36, 81, 8.334, 0.564),
    rec!(
        "U4",
        "U10",
        "U4->X1->X5->U10",
        10.08,
        10.27,
        131,
        8.603,
        0.617
    ),
    rec!("U4", "U13", "U4->X1->X2->U13", 15.82, 9.0, 93, 8.471, 0.667),
    rec!(
        "U4",
        "U14",
        "U4->X1->X3->U14",
        21.46,
        11.0,
        81,
        15.87,
        0.564
    ),
    rec!("U5", "U1", "U5->X1->U1", 8.81, 6.6, 119, 14.913, 0.825),
    rec!("U5", "U3", "U5->X1->U3", 10.84, 8.3, 155, 16.647, 0.601),
    rec!("U5", "U6", "U5->X1->U6", 17.71, 12.0, 123, 8.672, 0.581),
    rec!(
        "U5",
        "U10",
        "U5->X1->X5->U10",
        18.42,
        13.77,
        116,
        2.746,
        0.75
    ),
    rec!(
        "U5",
        "U13",
        "U5->X1->X2->U13",
        24.16,
        12.5,
        101,
        2.684,
        1.218
    ),
    rec!("U7", "U1", "U7->X4->X1->U1", 3.27, 10.37, 115, 3.928, 0.853),
    rec!("U7", "U3", "U7->X4->X1->U3", 5.3, 12.07, 125, 4.822, 0.734),
    rec!("U7", "U9", "U7->X4->U9", 8.9, 8.91, 60, 2.669, 0.843),
    rec!(
        "U7",
        "U10",
        "U7->X4->X5->U10",
        10.3,
        11.55,
        112,
        3.538,
        0.699
    ),
    rec!("U8", "U1", "U8->X4->X1->U1", 2.67, 7.46, 123, 6.395, 0.806),
    rec!("U8", "U3", "U8->X5->X1->U3", 4.7, 13.57, 129, 8.383, 0.611),
    rec!("U8", "U6", "U8->X4->X1->U6", 11.57, 12.86, 121, 4.3, 0.557),
    rec!("U8", "U9", "U8->X4->U9", 8.3, 6.0, 83, 4.857, 0.763),
    rec!("U8", "U10", "U8->X4->X5->U10", 9.7, 8.64, 118, 4.619, 0.807),
    rec!("U11", "U10", "U11->X5->U10", 4.38, 4.1, 118, 14.902, 0.741),
    rec!("U12", "U10", "U12->X5->U10", 4.98, 4.9, 142, 15.482, 0.613),
];

pub fn field_record(connection: &ConnectionId) -> Option<&'static FieldRecord> {
    FIELD_RECORDS.iter().find(|r| {
        r.transmitter == connection.transmitter.as_str()
            && r.receiver == connection.receiver.as_str()
    })
}
