//! Orchestration: wires host and guest sessions together over in-process
//! transports, one thread per guest. Every byte still crosses a wire-format
//! frame so the ledger matches a real deployment.

use std::thread;

use fedgbdt_core::dataset::Dataset;

use crate::error::{FedError, Result};
use crate::guest::{run_guest, GuestConf};
use crate::host::{HostSession, TrainOutcome};
use crate::model::FedParams;
use crate::transport::{ChannelTransport, Transport};

/// Train a distributed model over one host and any number of guests.
/// Deterministic given (datasets, params, seed) with the passthrough
/// cipher.
pub fn hybridtree_train(
    host: &Dataset,
    guests: &[Dataset],
    params: &FedParams,
) -> Result<TrainOutcome> {
    params.validate()?;
    let mut host_ends: Vec<(u32, ChannelTransport)> = Vec::new();
    let mut guest_ends: Vec<(u32, ChannelTransport)> = Vec::new();
    for (i, _) in guests.iter().enumerate() {
        let (h, g) = ChannelTransport::pair();
        host_ends.push((i as u32, h));
        guest_ends.push((i as u32, g));
    }

    thread::scope(|scope| {
        let mut handles = Vec::new();
        for ((index, mut transport), data) in guest_ends.into_iter().zip(guests.iter()) {
            let conf = GuestConf {
                index,
                e_guest: params.e_guest,
                lambda: params.lambda,
                max_bins: params.max_bins,
                mode: params.mode,
                frac_bits: params.frac_bits,
                seed: params.seed,
            };
            handles.push(scope.spawn(move || run_guest(conf, data, &mut transport)));
        }

        let transports: Vec<(u32, &mut dyn Transport)> = host_ends
            .iter_mut()
            .map(|(i, t)| (*i, t as &mut dyn Transport))
            .collect();
        let outcome = HostSession::new(host, *params, transports)?.train();

        for handle in handles {
            handle
                .join()
                .map_err(|_| FedError::Protocol("guest thread panicked".into()))??;
        }
        outcome
    })
}
