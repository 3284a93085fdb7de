package org.demo;

import static org.junit.jupiter.api.Assertions.assertFalse;
import static org.junit.jupiter.api.Assertions.assertTrue;

import org.junit.jupiter.api.Test;

class CharUtilsTest {

    @Test
    void testSoftHyphenIsInvisible() {
        assertTrue(CharUtils.isInvisibleChar(173));
        assertTrue(CharUtils.isInvisibleChar(8203));
    }

    @Test
    void testLettersAreVisible() {
        assertFalse(CharUtils.isInvisibleChar('a'));
        assertTrue(CharUtils.isVisible('a'));
    }
}
