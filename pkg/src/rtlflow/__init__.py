"""rtlflow: multi-role LLM Verilog generation with simulator feedback and
PPA-aware, synthesis-report-grounded optimization."""

__version__ = "0.1.0"
