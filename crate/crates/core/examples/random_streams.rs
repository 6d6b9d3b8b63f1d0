//! Counter-based streams: values depend only on (seed, label, position), so
//! substreams can be handed out freely and replayed exactly.

use pmcmc::rng::{RandomInputs, Stream};

fn main() -> pmcmc::error::Result<()> {
    let root = Stream::new(42);
    let mut a = root.substream("series-1");
    let mut b = root.substream("series-2");
    println!("series-1: {:.6} {:.6}", a.next_uniform(), a.next_normal());
    println!("series-2: {:.6} {:.6}", b.next_uniform(), b.next_normal());

    // A fresh handle on the same label replays the same values.
    let mut again = root.substream("series-1");
    println!("replayed: {:.6}", again.next_uniform());

    let inputs = RandomInputs::draw(&mut root.substream("inputs"), 5, 4, 1)?;
    println!(
        "inputs T={} N={} d={}",
        inputs.t_len(),
        inputs.n(),
        inputs.dim()
    );
    println!(
        "first state deviate {:.6}, first resampling uniform {:.6}",
        inputs.v_x(0, 0)[0].value(),
        inputs.v_a(1)[0]
    );
    Ok(())
}
