"""Closed-loop test bench for language-model-guided driving stacks.

The bench runs a simulated vehicle and a modular autonomy surrogate under a
virtual clock, condenses live messages into a driving state vector, renders
prompts for a pluggable strategic agent (rule-based, scripted, or a remote
chat endpoint), applies the agent's decisions under safety clamps, and
instruments every stage for latency, accuracy, and resource reporting.
"""

__version__ = "0.1.0"
