"""Planning block structures for teams of construction robots.

Structures are decomposed into substructures, ordered so that every prefix
can stand and be reached, and each piece is planned exactly with a
time-expanded flow MILP.  A grid simulator replays every schedule.
"""
__version__ = "0.1.0"
