mod calibrate;
mod detect;
mod evaluate;
mod mitigate;
mod simulate;
mod target;

use gatebias_core::error::Result;

use crate::args::Command;

pub fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Detect(args) => detect::run(args),
        Command::Mitigate(args) => mitigate::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::Calibrate(args) => calibrate::run(args),
        Command::Target(args) => target::run(args),
        Command::Simulate(args) => simulate::run(args),
    }
}
