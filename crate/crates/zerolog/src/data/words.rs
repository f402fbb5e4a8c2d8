//! Fixed word stock for the synthetic generator. Selection is seeded, so a
//! given spec always realizes the same vocabulary; the list itself never
//! changes order (appending is fine, reordering breaks regeneration).

pub const WORDS: &[&str] = &[
    "accept", "access", "account", "ack", "active", "adapter", "address", "admin", "agent",
    "alarm", "alert", "alloc", "allocate", "anchor", "append", "apply", "archive", "assign",
    "attach", "attempt", "audit", "auth", "backend", "backlog", "backup", "balance", "bank",
    "barrier", "batch", "beacon", "bind", "block", "boot", "bridge", "broadcast", "broker",
    "bucket", "buffer", "build", "bundle", "bus", "bypass", "cache", "call", "cancel",
    "capacity", "card", "carrier", "cell", "chain", "channel", "charge", "check", "checksum",
    "child", "chunk", "cipher", "claim", "class", "clean", "clear", "client", "clock", "close",
    "cluster", "code", "collect", "commit", "compact", "compare", "compile", "complete",
    "compress", "compute", "config", "confirm", "connect", "console", "consume", "control",
    "copy", "core", "count", "crash", "create", "credit", "cursor", "cycle", "daemon", "data",
    "database", "deadline", "debug", "decode", "decrypt", "degrade", "delay", "delete",
    "deliver", "deny", "deploy", "depth", "dequeue", "destroy", "detach", "detect", "device",
    "digest", "direct", "disable", "discard", "disk", "dispatch", "domain", "drain", "drive",
    "driver", "drop", "dump", "edge", "eject", "elect", "enable", "encode", "encrypt",
    "endpoint", "engine", "enqueue", "entry", "epoch", "error", "event", "evict", "exceed",
    "exchange", "execute", "exit", "expand", "expire", "export", "extend", "fail", "failover",
    "fault", "fetch", "field", "file", "filter", "finish", "fire", "flag", "flush", "forward",
    "fragment", "frame", "free", "freeze", "fsck", "gate", "gateway", "grant", "group",
    "handle", "handler", "hash", "head", "health", "heartbeat", "hold", "host", "image",
    "import", "index", "init", "inode", "input", "insert", "inspect", "install", "instance",
    "interface", "interrupt", "invalid", "invoke", "journal", "kernel", "key", "kill", "label",
    "latch", "launch", "layer", "lease", "ledger", "level", "limit", "link", "list", "listen",
    "load", "local", "lock", "log", "loop", "mark", "mask", "master", "match", "member",
    "memory", "merge", "message", "meta", "migrate", "mirror", "miss", "mode", "monitor",
    "mount", "move", "mutex", "name", "network", "node", "notify", "object", "offset", "open",
    "operation", "order", "output", "overflow", "owner", "pack", "packet", "page", "panic",
    "parse", "partition", "patch", "path", "pause", "peer", "pending", "permit", "phase",
    "ping", "pipe", "pipeline", "pivot", "plan", "pointer", "policy", "poll", "pool", "port",
    "post", "power", "prepare", "primary", "print", "probe", "process", "profile", "promote",
    "protocol", "proxy", "prune", "publish", "pull", "purge", "push", "query", "queue",
    "quota", "raise", "range", "rank", "rate", "read", "ready", "rebalance", "reboot",
    "rebuild", "receive", "reclaim", "record", "recover", "redirect", "refresh", "refuse",
    "region", "register", "reject", "relay", "release", "reload", "remote", "remove", "renew",
    "repair", "replace", "replica", "replicate", "report", "request", "reserve", "reset",
    "resize", "resolve", "resource", "respond", "restart", "restore", "resume", "retire",
    "retry", "return", "revoke", "ring", "role", "rollback", "root", "rotate", "route",
    "router", "rule", "run", "scan", "schedule", "scheduler", "schema", "scope", "scrub",
    "search", "secondary", "sector", "secure", "seed", "segment", "select", "send", "sense",
    "serial", "serve", "server", "service", "session", "shard", "share", "shell", "shift",
    "ship", "shrink", "shutdown", "signal", "skip", "slab", "slot", "snapshot", "socket",
    "source", "spawn", "spill", "spin", "split", "stack", "stage", "stale", "stall", "start",
    "state", "station", "status", "stop", "storage", "store", "stream", "stripe", "submit",
    "subnet", "sum", "suspend", "swap", "switch", "sync", "table", "tag", "tail", "target",
    "task", "tenant", "terminate", "thread", "threshold", "ticket", "tier", "timeout",
    "timer", "token", "trace", "track", "traffic", "transfer", "transit", "trap", "trigger",
    "trim", "trunk", "trust", "tune", "tunnel", "unit", "unlink", "unlock", "unmount",
    "update", "upgrade", "upload", "usage", "user", "validate", "value", "vault", "verify",
    "version", "view", "virtual", "volume", "vote", "wait", "wake", "warn", "watch", "wear",
    "weight", "wire", "worker", "wrap", "write", "zone",
];

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn words_are_distinct_lowercase_and_plentiful() {
        let set: BTreeSet<&str> = WORDS.iter().copied().collect();
        assert_eq!(set.len(), WORDS.len(), "duplicate word in stock");
        assert!(WORDS.len() >= 300);
        for w in WORDS {
            assert!(w.chars().all(|c| c.is_ascii_lowercase()), "{w:?}");
        }
    }
}
