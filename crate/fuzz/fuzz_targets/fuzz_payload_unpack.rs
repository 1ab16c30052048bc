//! Fuzzes payload unpacking: arbitrary slot vectors against arbitrary
//! dimensions must never panic, and accepted payloads must round-trip.

#![no_main]

use libfuzzer_sys::fuzz_target;

use airbandit::channel::{pack, payload_len, unpack, Payload};

fuzz_target!(|data: &[u8]| {
    if data.is_empty() {
        return;
    }
    let dimension = (data[0] as usize % 64) + 1;
    let slots: Vec<f64> = data[1..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let payload = Payload::from_slots(slots);
    match unpack(&payload, dimension) {
        Err(_) => {} // length mismatch is the expected rejection
        Ok((gram, vec)) => {
            assert_eq!(payload.len(), payload_len(dimension));
            // Mirrored reconstruction is symmetric by construction; packing
            // it again must reproduce the slots bit for bit (NaN-safe).
            let repacked = pack(&gram, &vec).expect("reconstructed gram is symmetric");
            assert_eq!(repacked.len(), payload.len());
            for (a, b) in repacked.slots().iter().zip(payload.slots()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
});
