"""JSON schemas for the machine-readable reports the CLI emits."""

from __future__ import annotations

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["command", "version", "parameters"],
    "properties": {
        "command": {"type": "string"},
        "version": {"type": "string"},
        "seed": {"type": ["integer", "null"]},
        "parameters": {"type": "object"},
        "threads_cap": {"type": ["integer", "null"]},
        "created_at": {"type": "string"},
    },
}

BALANCE_REPORT_SCHEMA = {
    "type": "object",
    "required": ["iterations", "converged", "final_partition_ref", "manifest"],
    "properties": {
        "manifest": MANIFEST_SCHEMA,
        "converged": {"type": "boolean"},
        "final_partition_ref": {"type": ["string", "null"]},
        "iterations": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["k", "lambda", "times", "imbalance", "lb", "max_dev"],
                "properties": {
                    "k": {"type": "integer", "minimum": 1},
                    "lambda": {"type": "array", "items": {"type": "number"}},
                    "times": {"type": "array", "items": {"type": "number"}},
                    "imbalance": {"type": "number", "minimum": 1.0},
                    "lb": {"type": "number", "exclusiveMinimum": 0.0, "maximum": 1.0},
                    "max_dev": {"type": "number", "minimum": 0.0},
                },
            },
        },
    },
}

EFFICIENCY_REPORT_SCHEMA = {
    "type": "object",
    "required": ["speedup", "ratio", "eff_core", "eff_gpu", "eff_coex1", "eff_coex2", "manifest"],
    "properties": {
        "manifest": MANIFEST_SCHEMA,
        "speedup": {"type": "number"},
        "ratio": {"type": "number"},
        "eff_core": {"type": "number"},
        "eff_gpu": {"type": "number"},
        "eff_coex1": {"type": "number"},
        "eff_coex2": {"type": "number"},
        "predicted_reduction": {"type": "number"},
        "cores_per_gpu": {"type": "integer"},
    },
}
