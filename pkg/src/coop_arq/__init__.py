"""Cooperative ARQ with selective and opportunistic amplify-and-forward relays."""
