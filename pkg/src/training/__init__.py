"""Empty __init__ for training package"""
