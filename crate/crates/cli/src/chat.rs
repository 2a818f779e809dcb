//! Line-oriented terminal client against an in-process runtime.

use std::io::{BufRead, Write};

use agentos_core::{visible_replies, AgentRuntime, RuntimeError};

pub const PROMPT: &str = "you> ";

/// Reads lines until `/quit` or end of input. Each visible reply is printed
/// once, followed by its attachment paths; IGNORE prints nothing. `/state`
/// dumps the state composed for the last message.
pub fn run_chat(
    rt: &AgentRuntime,
    user: &str,
    room: &str,
    input: impl BufRead,
    mut out: impl Write,
) -> anyhow::Result<()> {
    write!(out, "{PROMPT}")?;
    out.flush()?;
    for line in input.lines() {
        let line = line?;
        let text = line.trim();
        match text {
            "" => {}
            "/quit" => return Ok(()),
            "/state" => match rt.last_state() {
                Some(state) => writeln!(out, "{}", serde_json::to_string_pretty(&state)?)?,
                None => writeln!(out, "(no message processed yet)")?,
            },
            _ => match rt.process_message(rt.new_message(user, room, text)) {
                Ok(replies) => {
                    for reply in visible_replies(&replies) {
                        writeln!(out, "{}: {}", rt.agent_name(), reply.text)?;
                        for a in &reply.attachments {
                            writeln!(out, "  [attachment] {}", a.url)?;
                        }
                    }
                }
                Err(RuntimeError::InvalidMessage(m)) => writeln!(out, "(invalid message: {m})")?,
                Err(e) => writeln!(out, "(error: {e})")?,
            },
        }
        write!(out, "{PROMPT}")?;
        out.flush()?;
    }
    Ok(())
}
