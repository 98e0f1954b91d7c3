use nocsim::config::RunConfig;
use nocsim::engine::{run_with, RunOptions};
use std::time::Instant;

fn main() {
    for turn_cap in [8usize, 32] {
        println!("== turn_capacity {turn_cap}, hit 0.5 ==");
        for rate in [0.01, 0.05, 0.08, 0.12, 0.20] {
            let mut config = RunConfig::default().desk();
            config.workload.injection_rate = rate;
            config.workload.llc_hit_rate = 0.5;
            config.queues.turn_capacity = turn_cap;
            let start = Instant::now();
            let out = run_with(&config, RunOptions::default()).unwrap();
            println!(
                "rate {rate:.2}: missfrac {:5.1}% thru {:.3} miss/cyc {:.3} defl/cyc {:6.3} lat {:7.0} ({:.1?})",
                out.metrics.completed_miss_fraction,
                out.metrics.throughput,
                out.metrics.memory_read_requests,
                out.metrics.deflection_rate,
                out.metrics.avg_transaction_latency,
                start.elapsed(),
            );
        }
    }
}
