use std::path::PathBuf;

use clap::Args;
use hmpc_core::morphology::{lookup_chain, parse_chain_spec, validate_chain};

use crate::error::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Builtin chain name or chain file.
    #[arg(long)]
    pub chain: String,
}

/// Exit 0 for a valid chain; every violation is printed otherwise.
pub fn cmd_validate(args: &ValidateArgs) -> CliResult<()> {
    let chain = if let Some(c) = lookup_chain(&args.chain) {
        let v = validate_chain(&c);
        if !v.is_empty() {
            let list: Vec<String> = v.iter().map(|v| v.to_string()).collect();
            return Err(CliError::Config(list.join("\n")));
        }
        c
    } else {
        let path = PathBuf::from(&args.chain);
        if !path.is_file() {
            return Err(CliError::Config(format!("{:?} is neither a builtin chain nor a chain file", args.chain)));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        let spec = parse_chain_spec(&text).map_err(CliError::from_setup)?;
        spec.to_chain().map_err(|e| match e {
            hmpc_core::Error::InvalidChain(list) => CliError::Config(list.join("\n")),
            other => CliError::from_setup(other),
        })?
    };
    println!("{}: valid, {} joints", chain.name, chain.dof());
    Ok(())
}
