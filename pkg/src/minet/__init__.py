"""Empty __init__ for minet package"""
