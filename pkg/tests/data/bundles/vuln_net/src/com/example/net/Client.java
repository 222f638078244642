package com.example.net;

import android.webkit.WebView;
import java.net.URL;
import java.security.cert.X509Certificate;
import javax.crypto.Cipher;
import javax.net.ssl.X509TrustManager;

public class Client {
    byte[] seal(byte[] data) throws Exception {
        Cipher c = Cipher.getInstance("AES");
        return c.doFinal(data);
    }

    void show(WebView webview) {
        webview.getSettings().setJavaScriptEnabled(true);
        webview.getSettings().setAllowFileAccess(true);
    }

    URL endpoint(String host) throws Exception {
        return new URL("http://" + host + "/api");
    }

    static class TrustAll implements X509TrustManager {
        public final void checkServerTrusted(X509Certificate[] chain, String authType) {
        }

        public void checkClientTrusted(X509Certificate[] chain, String authType) {
        }

        public X509Certificate[] getAcceptedIssuers() {
            return new X509Certificate[0];
        }
    }
}
