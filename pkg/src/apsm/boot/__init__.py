"""Verified boot: hash trees, VBMeta, boot states, lineage, attestation."""
