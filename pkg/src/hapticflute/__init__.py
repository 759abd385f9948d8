"""Haptic guidance engine for learning a six-hole flute.

Subsystems: score material (:mod:`.score`), the simulated clutch device
(:mod:`.device`), hole sensing (:mod:`.sensing`), the three-mode tutor
(:mod:`.tutor`), the phase strategy and exam grading (:mod:`.strategy`),
the simulated-learner experiment harness (:mod:`.simlab`), the framed wire
protocol (:mod:`.wire`), and the session service (:mod:`.service`).
"""

__version__ = "0.1.0"
