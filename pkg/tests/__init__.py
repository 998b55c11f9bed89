# Tests for stirlingdp
